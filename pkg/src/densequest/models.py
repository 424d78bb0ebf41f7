"""Model registry, encoder/generator client protocols, deterministic stub
implementations, leaderboard ranking, and the deployment bundle export.

The stub encoder is normative: token-hashed signed unit vectors, so the whole
pipeline runs offline and reproducibly without any neural runtime.  Real
encoders plug in over HTTP without touching the core.
"""

from __future__ import annotations

import io
import json
import sys
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

from .corpus import Document
from .errors import (
    DimMismatch,
    DuplicateId,
    EmptyGeneration,
    EmptyRegistry,
    EndpointUnreachable,
    NotFound,
    PartialResponse,
)
from .retrieval import SIMILARITIES, SIM_COSINE, SIM_DOT

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODE_QUERY = "query"
MODE_DOCUMENT = "document"

LEADERBOARD_FIELDS = ("msmarco_ndcg10", "mteb_avg")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    dim: int
    sim: str = SIM_DOT
    encoder_endpoint: str = "stub"
    msmarco_ndcg10: float | None = None
    mteb_avg: float | None = None
    bundle_path: str | None = None
    description: str = ""
    asymmetric: bool = False

    def __post_init__(self):
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.dim <= 0:
            raise ValueError(f"model {self.model_id!r}: dim must be positive")
        if self.sim not in SIMILARITIES:
            raise ValueError(f"model {self.model_id!r}: unknown similarity {self.sim!r}")


class Registry:
    """Ordered collection of ModelRecords, unique by model_id."""

    def __init__(self, records: Sequence[ModelRecord] = ()):
        self._records: dict[str, ModelRecord] = {}
        for record in records:
            self.add(record)

    def add(self, record: ModelRecord) -> None:
        if record.model_id in self._records:
            raise DuplicateId(record.model_id)
        self._records[record.model_id] = record

    def get(self, model_id: str) -> ModelRecord:
        try:
            return self._records[model_id]
        except KeyError:
            raise NotFound(f"model {model_id!r} is not registered") from None

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._records

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records.values())

    def model_ids(self) -> list[str]:
        return list(self._records)


def load_registry(path: str | Path) -> Registry:
    """Read a models.toml file: one `[[models]]` block per dense retriever."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    blocks = data.get("models", [])
    registry = Registry()
    for block in blocks:
        registry.add(ModelRecord(**block))
    return registry


def registry_to_toml(registry: Registry) -> str:
    lines: list[str] = []
    for record in registry:
        lines.append("[[models]]")
        lines.append(f'model_id = "{record.model_id}"')
        lines.append(f"dim = {record.dim}")
        lines.append(f'sim = "{record.sim}"')
        lines.append(f'encoder_endpoint = "{record.encoder_endpoint}"')
        if record.msmarco_ndcg10 is not None:
            lines.append(f"msmarco_ndcg10 = {record.msmarco_ndcg10}")
        if record.mteb_avg is not None:
            lines.append(f"mteb_avg = {record.mteb_avg}")
        if record.bundle_path is not None:
            lines.append(f'bundle_path = "{record.bundle_path}"')
        if record.description:
            lines.append(f"description = {json.dumps(record.description)}")
        if record.asymmetric:
            lines.append("asymmetric = true")
        lines.append("")
    return "\n".join(lines)


def default_registry() -> Registry:
    """Stub pool shipped with the service; swap in real endpoints via models.toml."""
    return Registry(
        [
            ModelRecord(
                model_id="stub-contriever",
                dim=64,
                sim=SIM_DOT,
                msmarco_ndcg10=0.407,
                mteb_avg=56.0,
                description="Deterministic hash encoder standing in for a dot-product bi-encoder.",
            ),
            ModelRecord(
                model_id="stub-tasb",
                dim=64,
                sim=SIM_DOT,
                msmarco_ndcg10=0.408,
                mteb_avg=55.9,
                description="Deterministic hash encoder, dot-product scoring, asymmetric towers.",
                asymmetric=True,
            ),
            ModelRecord(
                model_id="stub-minilm",
                dim=48,
                sim=SIM_COSINE,
                msmarco_ndcg10=0.390,
                mteb_avg=56.3,
                description="Deterministic hash encoder standing in for a cosine bi-encoder.",
            ),
            ModelRecord(
                model_id="stub-ance",
                dim=64,
                sim=SIM_DOT,
                msmarco_ndcg10=0.388,
                description="Deterministic hash encoder; no zero-shot leaderboard entry.",
            ),
        ]
    )


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) % _U64
    return h


def stub_encode(model_id: str, mode: str, text: str, dim: int, asymmetric: bool = False) -> np.ndarray:
    """Reference hash encoding: signed token hashes, L2-normalized.

    Tokens are lowercase whitespace splits.  Each token hashes (FNV-1a 64) the
    string "<model_id>:<mode_tag>:<token>" and adds +-1 at index
    (h >> 1) mod dim, sign from bit 0.  Symmetric models share one tower
    (mode_tag ""); asymmetric ones use "q"/"d".  A zero accumulation (for one,
    the empty text) becomes the first basis vector.
    """
    if mode not in (MODE_QUERY, MODE_DOCUMENT):
        raise ValueError(f"unknown encode mode {mode!r}")
    mode_tag = "" if not asymmetric else ("q" if mode == MODE_QUERY else "d")
    acc = np.zeros(dim, dtype=np.float64)
    for token in text.lower().split():
        h = fnv1a64(f"{model_id}:{mode_tag}:{token}".encode("utf-8"))
        sign = 1.0 if h & 1 else -1.0
        acc[(h >> 1) % dim] += sign
    norm = float(np.sqrt(acc @ acc))
    if norm == 0.0:
        vec = np.zeros(dim, dtype=np.float64)
        vec[0] = 1.0
        return vec.astype(np.float32)
    return (acc / norm).astype(np.float32)


class EncoderClient(Protocol):
    def encode(self, record: ModelRecord, mode: str, texts: Sequence[str]) -> np.ndarray: ...


class GeneratorClient(Protocol):
    def generate(self, doc: Document, n: int) -> list[str]: ...


class StubEncoderClient:
    def encode(self, record: ModelRecord, mode: str, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), record.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            out[i] = stub_encode(record.model_id, mode, text, record.dim, record.asymmetric)
        return out


class HttpEncoderClient:
    """Talks to a sidecar exposing POST <endpoint>/encode.

    Request:  {"model_id": ..., "mode": "query"|"document", "texts": [...]}
    Response: {"vectors": [[...], ...]}
    """

    def __init__(self, endpoint: str, timeout: float = 120.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def encode(self, record: ModelRecord, mode: str, texts: Sequence[str]) -> np.ndarray:
        payload = {"model_id": record.model_id, "mode": mode, "texts": list(texts)}
        try:
            resp = self._session.post(f"{self.endpoint}/encode", json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise EndpointUnreachable(f"{self.endpoint}/encode: {e}") from e
        if resp.status_code != 200:
            raise EndpointUnreachable(f"{self.endpoint}/encode returned HTTP {resp.status_code}")
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as e:
            raise PartialResponse(f"malformed encode response: {e}") from e
        return np.asarray(vectors, dtype=np.float32)


def encode(client: EncoderClient, record: ModelRecord, mode: str, texts: Sequence[str]) -> np.ndarray:
    """Encode through a client and enforce the response contract."""
    vectors = client.encode(record, mode, texts)
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[0] != len(texts):
        raise PartialResponse(
            f"model {record.model_id!r}: got {vectors.shape[0] if vectors.ndim == 2 else '?'} "
            f"vectors for {len(texts)} texts"
        )
    if vectors.shape[1] != record.dim:
        raise DimMismatch(
            f"model {record.model_id!r}: endpoint returned dim {vectors.shape[1]}, registry says {record.dim}"
        )
    if vectors.size and not np.isfinite(vectors).all():
        raise PartialResponse(f"model {record.model_id!r}: response contains non-finite components")
    return vectors


class StubGeneratorClient:
    """Deterministic query generator: the first few tokens of the document."""

    max_tokens = 8

    def generate(self, doc: Document, n: int) -> list[str]:
        tokens = doc.encoder_input().split()
        base = " ".join(tokens[: min(self.max_tokens, len(tokens))])
        return [base if i == 1 else f"{base} #{i}" for i in range(1, n + 1)]


class HttpGeneratorClient:
    """Talks to a sidecar exposing POST <endpoint>/generate.

    Request:  {"doc": {"_id":..., "title":..., "text":...}, "n": ...}
    Response: {"queries": [...]}
    """

    def __init__(self, endpoint: str, timeout: float = 300.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def generate(self, doc: Document, n: int) -> list[str]:
        payload = {"doc": {"_id": doc.id, "title": doc.title, "text": doc.text}, "n": n}
        try:
            resp = self._session.post(f"{self.endpoint}/generate", json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise EndpointUnreachable(f"{self.endpoint}/generate: {e}") from e
        if resp.status_code != 200:
            raise EndpointUnreachable(f"{self.endpoint}/generate returned HTTP {resp.status_code}")
        try:
            return list(resp.json()["queries"])
        except (ValueError, KeyError) as e:
            raise EmptyGeneration(f"malformed generate response: {e}") from e


def generate_queries(client: GeneratorClient, doc: Document, n: int) -> list[str]:
    """Generate n non-empty query strings for one document."""
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    queries = client.generate(doc, n)
    if not queries:
        raise EmptyGeneration(f"generator returned no queries for doc {doc.id!r}")
    cleaned = [q for q in queries if isinstance(q, str) and q.strip()]
    if len(cleaned) != len(queries):
        raise EmptyGeneration(f"generator returned empty strings for doc {doc.id!r}")
    return cleaned


def make_client(endpoint: str) -> EncoderClient:
    return StubEncoderClient() if endpoint == "stub" else HttpEncoderClient(endpoint)


def make_generator(endpoint: str) -> GeneratorClient:
    return StubGeneratorClient() if endpoint == "stub" else HttpGeneratorClient(endpoint)


def leaderboard_rank(registry: Registry, field_name: str) -> list[tuple[str, float | None, int]]:
    """Rank models by a static leaderboard column, best first.

    Missing values rank after all present ones; ties and the missing group
    order by model_id.
    """
    if field_name not in LEADERBOARD_FIELDS:
        raise ValueError(f"unknown leaderboard field {field_name!r}")
    if len(registry) == 0:
        raise EmptyRegistry("registry has no models")
    rows = [(record.model_id, getattr(record, field_name)) for record in registry]
    rows.sort(key=lambda mv: (mv[1] is None, -(mv[1] or 0.0), mv[0]))
    return [(model_id, value, rank) for rank, (model_id, value) in enumerate(rows, start=1)]


_ADAPTER_SKELETON = '''\
# Adapter skeleton for plugging this dense retriever into the encoding
# sidecar.  Fill in the two encode methods; keep their signatures.

from typing import Dict, List

import numpy as np


class DenseRetrieverAdapter:
    """Loads one checkpoint and exposes the query/corpus encoding contract."""

    def __init__(self, **kwargs):
        self.query_encoder = None
        self.doc_encoder = None
        self.score_function = "{sim}"  # "dot" or "cosine"

    def encode_queries(self, queries: List[str], batch_size: int, **kwargs) -> np.ndarray:
        """Return one row per query, shape (len(queries), {dim}), float32."""
        raise NotImplementedError

    def encode_corpus(self, corpus: List[Dict[str, str]], batch_size: int, **kwargs) -> np.ndarray:
        """Corpus items carry "title" and "text"; join them with one space
        before encoding.  Return shape (len(corpus), {dim}), float32."""
        raise NotImplementedError
'''

_USAGE = """\
# Deploying {model_id}

1. Implement `DenseRetrieverAdapter` from `adapter_skeleton.txt` around your
   checkpoint ({dim}-dimensional vectors, `{sim}` scoring).
2. Wrap it in an HTTP sidecar exposing `POST /encode` with the body
   `{{"model_id": "...", "mode": "query"|"document", "texts": [...]}}` and the
   response `{{"vectors": [[...], ...]}}`.
3. Point the registry entry's `encoder_endpoint` at the sidecar URL and
   restart the service; embeddings are cached per collection under
   `<data_dir>/embeddings/<collection>/{model_id}.dqv`.
"""

BUNDLE_FILES = ("MODEL_CARD.md", "adapter_skeleton.txt", "USAGE.md")


def export_bundle(record: ModelRecord) -> bytes:
    """Build the downloadable deployment archive for one model.

    If the registry entry names a prebuilt archive it is returned verbatim;
    otherwise a deterministic zip with the three declared files is generated.
    """
    if record.bundle_path:
        return Path(record.bundle_path).read_bytes()
    card = [f"# {record.model_id}", ""]
    card.append(f"- dimension: {record.dim}")
    card.append(f"- scoring: {record.sim}")
    card.append(f"- towers: {'asymmetric (separate query/doc)' if record.asymmetric else 'shared'}")
    if record.msmarco_ndcg10 is not None:
        card.append(f"- MSMARCO nDCG@10: {record.msmarco_ndcg10}")
    if record.mteb_avg is not None:
        card.append(f"- MTEB average: {record.mteb_avg}")
    if record.description:
        card.extend(["", record.description])
    card.append("")
    files = {
        "MODEL_CARD.md": "\n".join(card),
        "adapter_skeleton.txt": _ADAPTER_SKELETON.format(sim=record.sim, dim=record.dim),
        "USAGE.md": _USAGE.format(model_id=record.model_id, dim=record.dim, sim=record.sim),
    }
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w", compression=zipfile.ZIP_DEFLATED) as archive:
        for name in BUNDLE_FILES:
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            archive.writestr(info, files[name])
    return buffer.getvalue()
