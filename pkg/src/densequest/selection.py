"""Per-method orchestration: turn a collection plus a model pool into one
ranked table per selection method.

Every method reduces to "one scalar per model, ranked by the method's
direction with a model-id tie-break"; this module owns that contract and the
method catalog the API and CLI expose.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import qpp
from .corpus import Document, Query, Qrels
from .embeddings import EmbeddingMatrix, read_embeddings, write_embeddings
from .errors import DimMismatch, InvalidParams, NoUsableQueries, UnknownMethod
from .fusion import mean_ndcg_at_k, ndcg_at_k, pseudo_qrels_from_fused, rrf_fuse
from .models import (
    MODE_DOCUMENT,
    MODE_QUERY,
    EncoderClient,
    GeneratorClient,
    ModelRecord,
    Registry,
    encode,
    generate_queries,
    leaderboard_rank,
)
from .perturbation import (
    PseudoQuery,
    alteration_method_score,
    alteration_query_value,
    larmor_score,
    mask_variants,
    sample_docs,
)
from .qpp import HIGHER_IS_BETTER, LOWER_IS_BETTER, QueryScoreList
from .retrieval import Run, batch_search, similarity_scores, top_k

ENCODE_BATCH = 256


@dataclass(frozen=True)
class MethodInfo:
    method: str
    name: str
    description: str
    direction: str
    requires_queries: bool
    heavy: bool
    params: tuple[str, ...]


METHODS: dict[str, MethodInfo] = {
    m.method: m
    for m in [
        MethodInfo(
            "binary_entropy",
            "Binary Entropy",
            "Averages the Shannon binary entropy of each query's min-max-normalized "
            "retrieval scores; a confident model separates scores sharply and lands "
            "near zero entropy, so lower is better.",
            LOWER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k", "normalize_before_qpp"),
        ),
        MethodInfo(
            "query_alteration",
            "Query Alteration",
            "Drops one query term at a time, re-encodes each variant, and measures "
            "how much the originally retrieved documents' scores vary; robust models "
            "move less, so lower is better.",
            LOWER_IS_BETTER,
            requires_queries=True,
            heavy=True,
            params=("k", "cap", "seed"),
        ),
        MethodInfo(
            "smv",
            "SMV",
            "Score magnitude and variance: weights each retrieval score by the log "
            "ratio to the list mean, normalized by the corpus-centroid score, then "
            "averages over queries.",
            HIGHER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k", "normalize_before_qpp"),
        ),
        MethodInfo(
            "nqc",
            "NQC",
            "Normalized query commitment: the standard deviation of each query's "
            "top-k scores over the corpus-centroid score, averaged over queries.",
            HIGHER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k", "normalize_before_qpp"),
        ),
        MethodInfo(
            "sigma",
            "Sigma-max",
            "Maximal standard deviation over all top-x cutoffs of each query's "
            "score list, averaged over queries.",
            HIGHER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k", "normalize_before_qpp"),
        ),
        MethodInfo(
            "wig",
            "WIG",
            "Weighted information gain: mean score gain of the top-k documents over "
            "the corpus-centroid score, averaged over queries.",
            HIGHER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k", "normalize_before_qpp"),
        ),
        MethodInfo(
            "fusion",
            "Fusion",
            "Fuses all models' rankings with reciprocal rank fusion into a pseudo-"
            "relevant ranking, then scores each model by its mean nDCG@10 against "
            "those pseudo-judgments.",
            HIGHER_IS_BETTER,
            requires_queries=True,
            heavy=False,
            params=("k",),
        ),
        MethodInfo(
            "msmarco",
            "MSMARCO leaderboard",
            "Static ranking by each model's published MSMARCO nDCG@10; needs "
            "neither queries nor the corpus.",
            HIGHER_IS_BETTER,
            requires_queries=False,
            heavy=False,
            params=(),
        ),
        MethodInfo(
            "mteb",
            "MTEB leaderboard",
            "Static ranking by each model's published MTEB average; needs neither "
            "queries nor the corpus.",
            HIGHER_IS_BETTER,
            requires_queries=False,
            heavy=False,
            params=(),
        ),
        MethodInfo(
            "larmor",
            "LARMOR (pseudo-queries)",
            "Generates queries from sampled documents, judges each generated query "
            "relevant to its source document, and scores models by mean nDCG@10 on "
            "those pseudo-judgments.",
            HIGHER_IS_BETTER,
            requires_queries=False,
            heavy=True,
            params=("n_docs", "seed"),
        ),
    ]
}

LEADERBOARD_FIELD_FOR = {"msmarco": "msmarco_ndcg10", "mteb": "mteb_avg"}


@dataclass(frozen=True)
class SelectionParams:
    k: int = 100
    seed: int = 7
    cap: int = 16
    n_docs: int = 100
    pseudo_queries_per_doc: int = 1
    fusion_depth: int = 10
    rrf_c: float = 60.0
    normalize_before_qpp: bool = False
    alteration_direction: str = LOWER_IS_BETTER

    def merged(self, overrides: Mapping[str, object]) -> "SelectionParams":
        """Apply request-level overrides, validating names lazily and types
        strictly (unknown keys pass through untouched for forward compat)."""
        kwargs = {}
        for key in (
            "k", "seed", "cap", "n_docs", "pseudo_queries_per_doc", "fusion_depth",
        ):
            if key in overrides:
                kwargs[key] = _as_int(key, overrides[key], positive=key != "seed")
        if "rrf_c" in overrides:
            try:
                kwargs["rrf_c"] = float(overrides["rrf_c"])  # type: ignore[arg-type]
            except (TypeError, ValueError):
                raise InvalidParams(f"rrf_c must be a number, got {overrides['rrf_c']!r}") from None
            if kwargs["rrf_c"] <= 0:
                raise InvalidParams("rrf_c must be positive")
        if "normalize_before_qpp" in overrides:
            value = overrides["normalize_before_qpp"]
            if not isinstance(value, bool):
                raise InvalidParams("normalize_before_qpp must be a boolean")
            kwargs["normalize_before_qpp"] = value
        if "alteration_direction" in overrides:
            value = overrides["alteration_direction"]
            if value not in (HIGHER_IS_BETTER, LOWER_IS_BETTER):
                raise InvalidParams(f"alteration_direction must be one of the two directions, got {value!r}")
            kwargs["alteration_direction"] = value
        return replace(self, **kwargs)


def _as_int(key: str, value: object, positive: bool) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise InvalidParams(f"{key} must be an integer, got {value!r}")
    try:
        number = int(value)
    except ValueError:
        raise InvalidParams(f"{key} must be an integer, got {value!r}") from None
    if positive and number <= 0:
        raise InvalidParams(f"{key} must be positive, got {number}")
    return number


@dataclass
class CollectionData:
    documents: list[Document]
    queries: list[Query] = field(default_factory=list)
    qrels: Qrels | None = None


@dataclass
class SelectionContext:
    collection: CollectionData
    registry: Registry
    encoder: EncoderClient
    generator: GeneratorClient
    embeddings_dir: Path
    params: SelectionParams = field(default_factory=SelectionParams)
    progress: Callable[[int, int], None] | None = None
    _matrices: dict[str, EmbeddingMatrix] = field(default_factory=dict)

    def sorted_records(self) -> list[ModelRecord]:
        return sorted(self.registry, key=lambda r: r.model_id)

    def report(self, done: int, total: int) -> None:
        if self.progress is not None:
            self.progress(done, total)


@dataclass
class MethodOutcome:
    method: str
    direction: str
    ranked: list[tuple[str, float | None, int]]
    diagnostics: dict | None = None


def embeddings_path(embeddings_dir: Path, model_id: str) -> Path:
    return Path(embeddings_dir) / f"{model_id}.dqv"


def ensure_embeddings(ctx: SelectionContext, record: ModelRecord) -> EmbeddingMatrix:
    """Load the cached document matrix for one model, encoding it on a miss."""
    cached = ctx._matrices.get(record.model_id)
    if cached is not None:
        return cached
    path = embeddings_path(ctx.embeddings_dir, record.model_id)
    if path.exists():
        matrix = read_embeddings(path, model_id=record.model_id)
        if matrix.dim != record.dim:
            raise DimMismatch(
                f"cached embeddings for {record.model_id!r} have dim {matrix.dim}, registry says {record.dim}"
            )
    else:
        docs = ctx.collection.documents
        vectors = np.empty((len(docs), record.dim), dtype=np.float32)
        for start in range(0, len(docs), ENCODE_BATCH):
            chunk = docs[start:start + ENCODE_BATCH]
            vectors[start:start + len(chunk)] = encode(
                ctx.encoder, record, MODE_DOCUMENT, [d.encoder_input() for d in chunk]
            )
        matrix = EmbeddingMatrix(
            model_id=record.model_id, dim=record.dim, doc_ids=[d.id for d in docs], vectors=vectors
        )
        path.parent.mkdir(parents=True, exist_ok=True)
        write_embeddings(matrix, path)
    ctx._matrices[record.model_id] = matrix
    return matrix


def encode_collection(ctx: SelectionContext) -> None:
    """Encoding stage: make sure every registry model has a cached matrix."""
    records = ctx.sorted_records()
    for i, record in enumerate(records):
        ensure_embeddings(ctx, record)
        ctx.report(i + 1, len(records))


def all_embeddings_cached(embeddings_dir: Path, registry: Registry) -> bool:
    return all(embeddings_path(embeddings_dir, r.model_id).exists() for r in registry)


def _query_vectors(ctx: SelectionContext, record: ModelRecord, texts: Sequence[str]) -> np.ndarray:
    out = np.empty((len(texts), record.dim), dtype=np.float32)
    for start in range(0, len(texts), ENCODE_BATCH):
        chunk = texts[start:start + ENCODE_BATCH]
        out[start:start + len(chunk)] = encode(ctx.encoder, record, MODE_QUERY, chunk)
    return out


def _model_run(ctx: SelectionContext, record: ModelRecord, matrix: EmbeddingMatrix) -> tuple[Run, np.ndarray]:
    texts = [q.text for q in ctx.collection.queries]
    qvecs = _query_vectors(ctx, record, texts)
    vectors = {q.id: qvecs[i] for i, q in enumerate(ctx.collection.queries)}
    return batch_search(matrix, vectors, ctx.params.k, record.sim), qvecs


def rank_rows(values: Mapping[str, float | None], direction: str) -> list[tuple[str, float | None, int]]:
    """Order models by value per the method direction; missing values rank
    last; ties and the missing group order by model_id."""
    sign = -1.0 if direction == HIGHER_IS_BETTER else 1.0
    rows = sorted(
        values.items(),
        key=lambda kv: (kv[1] is None, sign * (kv[1] if kv[1] is not None else 0.0), kv[0]),
    )
    return [(model_id, value, rank) for rank, (model_id, value) in enumerate(rows, start=1)]


_QPP_ESTIMATORS: dict[str, Callable[[QueryScoreList], float]] = {
    "nqc": qpp.nqc,
    "smv": qpp.smv,
    "sigma": qpp.sigma_max,
    "wig": qpp.wig,
    "binary_entropy": qpp.binary_entropy,
}


def _normalized_score_list(query_id: str, scores: list[float], corpus_score: float) -> QueryScoreList:
    """Min-max normalize a score list and map the corpus baseline through the
    same affine transform (degenerate lists pin both to 0.5)."""
    arr = np.asarray(scores, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return QueryScoreList(query_id, [0.5] * len(scores), 0.5)
    normalized = ((arr - lo) / (hi - lo)).tolist()
    return QueryScoreList(query_id, normalized, (corpus_score - lo) / (hi - lo))


def _compute_qpp(ctx: SelectionContext, method: str) -> MethodOutcome:
    estimator = _QPP_ESTIMATORS[method]
    info = METHODS[method]
    records = ctx.sorted_records()
    values: dict[str, float | None] = {}
    diagnostics: dict[str, dict[str, float]] = {}
    for i, record in enumerate(records):
        matrix = ensure_embeddings(ctx, record)
        run, qvecs = _model_run(ctx, record, matrix)
        per_query: dict[str, float] = {}
        for j, query in enumerate(ctx.collection.queries):
            scores = run.scores_for(query.id)
            corpus_score = qpp.corpus_centroid_score(matrix, qvecs[j], record.sim)
            if ctx.params.normalize_before_qpp:
                qsl = _normalized_score_list(query.id, scores, corpus_score)
            else:
                qsl = QueryScoreList(query.id, scores, corpus_score)
            per_query[query.id] = estimator(qsl)
        score = qpp.aggregate(list(per_query.values()), method, record.model_id, info.direction)
        values[record.model_id] = score.value
        diagnostics[record.model_id] = per_query
        ctx.report(i + 1, len(records))
    return MethodOutcome(method, info.direction, rank_rows(values, info.direction), {"per_query": diagnostics})


def _compute_fusion(ctx: SelectionContext) -> MethodOutcome:
    info = METHODS["fusion"]
    records = ctx.sorted_records()
    runs: dict[str, Run] = {}
    for i, record in enumerate(records):
        matrix = ensure_embeddings(ctx, record)
        runs[record.model_id], _ = _model_run(ctx, record, matrix)
        ctx.report(i + 1, len(records) + 1)
    fused = rrf_fuse([runs[r.model_id] for r in records], ctx.params.rrf_c)
    pseudo = pseudo_qrels_from_fused(fused, ctx.params.fusion_depth)
    values: dict[str, float | None] = {}
    diagnostics: dict[str, dict[str, float]] = {}
    for record in records:
        run = runs[record.model_id]
        per_query = {
            qid: ndcg_at_k(run.ranking_for(qid), pseudo.get(qid, {}), 10) for qid in run.entries
        }
        values[record.model_id] = mean_ndcg_at_k(run, pseudo, 10)
        diagnostics[record.model_id] = per_query
    ctx.report(len(records) + 1, len(records) + 1)
    return MethodOutcome("fusion", info.direction, rank_rows(values, info.direction), {"per_query": diagnostics})


def _compute_alteration(ctx: SelectionContext) -> MethodOutcome:
    direction = ctx.params.alteration_direction
    records = ctx.sorted_records()
    values: dict[str, float | None] = {}
    diagnostics: dict[str, dict[str, float]] = {}
    usable_any = False
    for i, record in enumerate(records):
        matrix = ensure_embeddings(ctx, record)
        doc_index = {doc_id: j for j, doc_id in enumerate(matrix.doc_ids)}
        per_query: dict[str, float] = {}
        for query in ctx.collection.queries:
            variants = mask_variants(query, cap=ctx.params.cap, seed=ctx.params.seed)
            if not variants:
                continue
            qvec = encode(ctx.encoder, record, MODE_QUERY, [query.text])[0]
            entries = top_k(matrix, qvec, ctx.params.k, record.sim)
            variant_vecs = _query_vectors(ctx, record, [v.text for v in variants])
            doc_rows = matrix.vectors[[doc_index[e.doc_id] for e in entries]]
            sub = EmbeddingMatrix(record.model_id, record.dim, [e.doc_id for e in entries], doc_rows)
            variant_scores = np.stack(
                [similarity_scores(sub, variant_vecs[v], record.sim) for v in range(len(variants))]
            )
            per_query[query.id] = alteration_query_value(variant_scores, [e.score for e in entries])
        if per_query:
            usable_any = True
            score = alteration_method_score(record.model_id, list(per_query.values()), direction)
            values[record.model_id] = score.value
        else:
            values[record.model_id] = None
        diagnostics[record.model_id] = per_query
        ctx.report(i + 1, len(records))
    if not usable_any:
        raise NoUsableQueries("every query is single-token; masking produced no variants")
    return MethodOutcome("query_alteration", direction, rank_rows(values, direction), {"per_query": diagnostics})


def _compute_larmor(ctx: SelectionContext) -> MethodOutcome:
    info = METHODS["larmor"]
    sampled = sample_docs(ctx.collection.documents, ctx.params.n_docs, ctx.params.seed)
    pseudo_queries: list[PseudoQuery] = []
    for doc in sampled:
        texts = generate_queries(ctx.generator, doc, ctx.params.pseudo_queries_per_doc)
        for j, text in enumerate(texts, start=1):
            pseudo_queries.append(PseudoQuery(id=f"pq-{doc.id}-{j}", source_doc_id=doc.id, text=text))
    records = ctx.sorted_records()
    values: dict[str, float | None] = {}
    for i, record in enumerate(records):
        matrix = ensure_embeddings(ctx, record)
        qvecs = _query_vectors(ctx, record, [pq.text for pq in pseudo_queries])
        vectors = {pq.id: qvecs[j] for j, pq in enumerate(pseudo_queries)}
        run = batch_search(matrix, vectors, ctx.params.k, record.sim)
        values[record.model_id] = larmor_score(record.model_id, pseudo_queries, run).value
        ctx.report(i + 1, len(records))
    diagnostics = {"pseudo_query_count": len(pseudo_queries)}
    return MethodOutcome("larmor", info.direction, rank_rows(values, info.direction), diagnostics)


def _compute_leaderboard(ctx: SelectionContext, method: str) -> MethodOutcome:
    info = METHODS[method]
    ranked = leaderboard_rank(ctx.registry, LEADERBOARD_FIELD_FOR[method])
    ctx.report(1, 1)
    return MethodOutcome(method, info.direction, ranked, None)


def compute_method(method: str, ctx: SelectionContext) -> MethodOutcome:
    """Run one selection method over the pool; the model enumeration order is
    always sorted by model_id so results are reproducible."""
    info = METHODS.get(method)
    if info is None:
        raise UnknownMethod(f"unknown method {method!r}")
    if info.requires_queries and not ctx.collection.queries:
        raise InvalidParams(f"method {method!r} requires a query set")
    if method in _QPP_ESTIMATORS:
        return _compute_qpp(ctx, method)
    if method == "fusion":
        return _compute_fusion(ctx)
    if method == "query_alteration":
        return _compute_alteration(ctx)
    if method == "larmor":
        return _compute_larmor(ctx)
    return _compute_leaderboard(ctx, method)


def true_ndcg_ranking(ctx: SelectionContext, qrels: Qrels) -> dict[str, float]:
    """Meta-evaluation helper: real nDCG@10 per model when judgments exist."""
    out: dict[str, float] = {}
    for record in ctx.sorted_records():
        matrix = ensure_embeddings(ctx, record)
        run, _ = _model_run(ctx, record, matrix)
        out[record.model_id] = mean_ndcg_at_k(run, qrels, 10)
    return out
