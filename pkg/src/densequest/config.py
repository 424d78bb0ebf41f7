"""Service configuration, loaded from a TOML file."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .qpp import HIGHER_IS_BETTER, LOWER_IS_BETTER

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_UPLOAD_CAP = 2 * 1024 * 1024 * 1024  # 2 GiB


@dataclass
class ServiceConfig:
    data_dir: str = "data"
    host: str = "127.0.0.1"
    port: int = 8080
    heavy_workers: int = 1
    light_workers: int = 1
    default_k: int = 100
    seed: int = 7
    normalize_before_qpp: bool = False
    pseudo_queries_per_doc: int = 1
    larmor_docs: int = 100
    mask_cap: int = 16
    fusion_depth: int = 10
    rrf_c: float = 60.0
    alteration_direction: str = LOWER_IS_BETTER
    upload_cap_bytes: int = DEFAULT_UPLOAD_CAP
    auth_token: str = ""
    registry_path: str = ""
    generator_endpoint: str = "stub"
    encoder_plugin: str = ""
    encoder_plugin_params: dict = field(default_factory=dict)
    static_dir: str = ""

    def __post_init__(self):
        if self.heavy_workers < 0 or self.light_workers < 0:
            raise ValueError("worker counts must be non-negative")
        if self.default_k <= 0:
            raise ValueError("default_k must be positive")
        if self.upload_cap_bytes <= 0:
            raise ValueError("upload_cap_bytes must be positive")
        if self.alteration_direction not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
            raise ValueError(f"bad alteration_direction {self.alteration_direction!r}")


def load_config(path: str | Path) -> ServiceConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    known = {f.name for f in fields(ServiceConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return ServiceConfig(**data)
