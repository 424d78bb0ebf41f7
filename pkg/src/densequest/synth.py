"""Synthetic benchmark pool: a planted collection plus encoder clients whose
quality is controlled, so the whole service can be exercised end to end
without any real dense retriever.

One model ("good") encodes a query as its relevant document's vector plus
small Gaussian noise; the others rotate that ideal direction by a seeded
random rotation of increasing angle, degrading retrieval quality in a known
order.  Document texts start with a `docNNNN` tag the encoder parses, so the
generated pseudo-queries of the stub generator stay resolvable too.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, Query, serialize_corpus, serialize_qrels, serialize_queries
from .models import MODE_QUERY, ModelRecord, Registry, registry_to_toml, stub_encode
from .retrieval import SIM_COSINE, SIM_DOT

DOC_TAG_PREFIX = "doc"


@dataclass(frozen=True)
class PlantedModel:
    model_id: str
    rotation_deg: float
    sim: str = SIM_DOT
    msmarco_ndcg10: float | None = None
    mteb_avg: float | None = None


@dataclass
class PoolSpec:
    seed: int = 0
    n_docs: int = 1000
    dim: int = 32
    n_queries: int = 50
    noise_sigma: float = 0.05
    models: list[PlantedModel] = field(default_factory=lambda: default_planted_models())


def default_planted_models() -> list[PlantedModel]:
    # leaderboard numbers deliberately disagree with the planted quality order
    return [
        PlantedModel("planted-a", rotation_deg=0.0, sim=SIM_DOT, msmarco_ndcg10=0.39, mteb_avg=55.1),
        PlantedModel("planted-b", rotation_deg=55.0, sim=SIM_DOT, msmarco_ndcg10=0.43, mteb_avg=57.2),
        PlantedModel("planted-c", rotation_deg=72.0, sim=SIM_COSINE, msmarco_ndcg10=0.41, mteb_avg=56.4),
        PlantedModel("planted-d", rotation_deg=88.0, sim=SIM_COSINE, mteb_avg=54.8),
    ]


def doc_tag(index: int) -> str:
    return f"{DOC_TAG_PREFIX}{index:04d}"


def doc_vector_table(seed: int, n_docs: int, dim: int) -> np.ndarray:
    """Unit document vectors shared by every planted model."""
    rng = np.random.default_rng(seed * 1_000_003 + 17)
    table = rng.standard_normal((n_docs, dim))
    table /= np.linalg.norm(table, axis=1, keepdims=True)
    return table.astype(np.float64)


def make_collection(spec: PoolSpec) -> tuple[list[Document], list[Query], dict[str, dict[str, int]]]:
    """Planted corpus, queries and the ground-truth qrels.

    Every query has exactly one relevant document; its text carries that
    document's tag so the planted encoders can resolve it.
    """
    docs = []
    for i in range(spec.n_docs):
        words = " ".join(f"w{i:04d}x{j}" for j in range(7))
        docs.append(Document(id=f"d{i:04d}", title="", text=f"{doc_tag(i)} {words}"))
    rng = np.random.default_rng(spec.seed * 7_777_777 + 3)
    relevant = rng.choice(spec.n_docs, size=spec.n_queries, replace=False)
    queries = []
    qrels: dict[str, dict[str, int]] = {}
    for j, target in enumerate(relevant):
        qid = f"q{j:03d}"
        queries.append(Query(id=qid, text=f"{doc_tag(int(target))} need{j} ask{j}"))
        qrels[qid] = {docs[int(target)].id: 1}
    return docs, queries, qrels


def build_registry(spec: PoolSpec) -> Registry:
    return Registry(
        [
            ModelRecord(
                model_id=m.model_id,
                dim=spec.dim,
                sim=m.sim,
                encoder_endpoint="planted",
                msmarco_ndcg10=m.msmarco_ndcg10,
                mteb_avg=m.mteb_avg,
                description=f"Planted synthetic encoder, rotation {m.rotation_deg:g} degrees.",
            )
            for m in spec.models
        ]
    )


class PlantedEncoderClient:
    """Encoder client over the planted geometry.

    Documents map to their table row.  Queries map to the tagged document's
    row rotated by the model's angle towards a seeded random direction, plus
    Gaussian noise.  Texts without a resolvable tag fall back to the hash
    stub so arbitrary input stays total.
    """

    def __init__(self, spec: PoolSpec):
        self.spec = spec
        self.table = doc_vector_table(spec.seed, spec.n_docs, spec.dim)
        self.angles = {m.model_id: math.radians(m.rotation_deg) for m in spec.models}

    def _resolve(self, text: str) -> int | None:
        token = text.split(maxsplit=1)[0] if text.split() else ""
        if token.startswith(DOC_TAG_PREFIX) and token[len(DOC_TAG_PREFIX):].isdigit():
            index = int(token[len(DOC_TAG_PREFIX):])
            if 0 <= index < self.spec.n_docs:
                return index
        return None

    def _rng_for(self, model_id: str, text: str) -> np.random.Generator:
        digest = hashlib.sha256(f"{self.spec.seed}:{model_id}:{text}".encode("utf-8")).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def encode(self, record: ModelRecord, mode: str, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), record.dim), dtype=np.float32)
        for i, text in enumerate(texts):
            index = self._resolve(text)
            if index is None:
                out[i] = stub_encode(record.model_id, mode, text, record.dim, record.asymmetric)
                continue
            base = self.table[index]
            if mode != MODE_QUERY:
                out[i] = base.astype(np.float32)
                continue
            rng = self._rng_for(record.model_id, text)
            theta = self.angles.get(record.model_id, 0.0)
            vec = base
            if theta != 0.0:
                raw = rng.standard_normal(self.spec.dim)
                ortho = raw - (raw @ base) * base
                norm = np.linalg.norm(ortho)
                if norm > 0:
                    ortho /= norm
                    vec = math.cos(theta) * base + math.sin(theta) * ortho
            vec = vec + self.spec.noise_sigma * rng.standard_normal(self.spec.dim)
            out[i] = vec.astype(np.float32)
        return out


def encoder_factory(params: dict) -> PlantedEncoderClient:
    """Service plugin hook: build the planted client from config params."""
    spec = PoolSpec(
        seed=int(params.get("seed", 0)),
        n_docs=int(params.get("n_docs", 1000)),
        dim=int(params.get("dim", 32)),
        n_queries=int(params.get("n_queries", 50)),
        noise_sigma=float(params.get("noise_sigma", 0.05)),
    )
    return PlantedEncoderClient(spec)


def write_pool(out_dir: str | Path, spec: PoolSpec) -> Path:
    """Materialize the planted pool as collection files plus models.toml."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs, queries, qrels = make_collection(spec)
    (out / "corpus.jsonl").write_text("\n".join(serialize_corpus(docs)) + "\n", encoding="utf-8")
    (out / "queries.jsonl").write_text("\n".join(serialize_queries(queries)) + "\n", encoding="utf-8")
    (out / "qrels.tsv").write_text("\n".join(serialize_qrels(qrels)) + "\n", encoding="utf-8")
    (out / "models.toml").write_text(registry_to_toml(build_registry(spec)), encoding="utf-8")
    return out
