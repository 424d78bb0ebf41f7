"""Exact top-k similarity search and TREC run file IO.

Scores are accumulated in float64 regardless of the float32 storage, and
ordering is always (score desc, doc_id asc) so results are reproducible
across platforms and across sequential/parallel execution.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import DimMismatch, MalformedRow, NonFiniteQuery

SIM_DOT = "dot"
SIM_COSINE = "cosine"
SIMILARITIES = (SIM_DOT, SIM_COSINE)

DEFAULT_RUN_TAG = "densequest"


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class Run:
    model_id: str
    entries: dict[str, list[RunEntry]] = field(default_factory=dict)

    def query_ids(self) -> set[str]:
        return set(self.entries)

    def scores_for(self, query_id: str) -> list[float]:
        return [e.score for e in self.entries[query_id]]

    def ranking_for(self, query_id: str) -> list[str]:
        return [e.doc_id for e in self.entries[query_id]]


def _as_query_vector(query_vec, dim: int) -> np.ndarray:
    vec = np.asarray(query_vec, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise DimMismatch(f"query vector has shape {vec.shape}, matrix dim is {dim}")
    if not np.isfinite(vec).all():
        raise NonFiniteQuery("query vector contains NaN or Inf")
    return vec


def similarity_scores(matrix: EmbeddingMatrix, query_vec, sim: str) -> np.ndarray:
    """Similarity of one query vector against every document row, float64.

    Cosine treats any zero-norm vector (document or query) as scoring 0.0.
    """
    q = _as_query_vector(query_vec, matrix.dim)
    rows = matrix.vectors.astype(np.float64)
    if sim == SIM_DOT:
        return rows @ q
    if sim == SIM_COSINE:
        q_norm = math.sqrt(float(q @ q))
        if q_norm == 0.0:
            return np.zeros(len(matrix.doc_ids))
        row_norms = np.linalg.norm(rows, axis=1)
        dots = rows @ (q / q_norm)
        return np.divide(dots, row_norms, out=np.zeros_like(dots), where=row_norms != 0.0)
    raise ValueError(f"unknown similarity {sim!r}")


def top_k(matrix: EmbeddingMatrix, query_vec, k: int, sim: str = SIM_DOT) -> list[RunEntry]:
    """Exactly the k highest-similarity documents, (score desc, doc_id asc)."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    scores = similarity_scores(matrix, query_vec, sim)
    ids = np.asarray(matrix.doc_ids)
    order = np.lexsort((ids, -scores))[: min(k, len(ids))]
    return [
        RunEntry(doc_id=str(ids[i]), score=float(scores[i]), rank=rank)
        for rank, i in enumerate(order, start=1)
    ]


def batch_search(
    matrix: EmbeddingMatrix,
    queries: Mapping[str, Iterable[float]],
    k: int,
    sim: str = SIM_DOT,
    max_workers: int | None = None,
) -> Run:
    """Run top_k for every query; per-query results do not depend on the
    execution order, so parallel and sequential output are identical."""
    run = Run(model_id=matrix.model_id)
    if not queries:
        return run
    query_ids = list(queries)

    def search_one(qid: str) -> list[RunEntry]:
        try:
            return top_k(matrix, queries[qid], k, sim)
        except (DimMismatch, NonFiniteQuery) as e:
            raise type(e)(f"query {qid!r}: {e}") from e

    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(search_one, query_ids))
    else:
        results = [search_one(qid) for qid in query_ids]
    for qid, entries in zip(query_ids, results):
        run.entries[qid] = entries
    return run


def write_trec_run(run: Run, sink: IO[str] | str | os.PathLike, tag: str | None = None) -> None:
    """Write the standard 6-column format `qid Q0 docid rank score tag`.

    Scores are rendered with 6 decimals.  The default tag is the system tag;
    pass `tag=run.model_id` to keep the model identity in the file.
    """
    if tag is None:
        tag = DEFAULT_RUN_TAG
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="utf-8") as fh:
            _write_trec(run, fh, tag)
    else:
        _write_trec(run, sink, tag)


def _write_trec(run: Run, fh: IO[str], tag: str) -> None:
    for qid in run.entries:
        for e in run.entries[qid]:
            fh.write(f"{qid} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")


def read_trec_run(source: IO[str] | str | os.PathLike) -> Run:
    """Parse a 6-column run file; the tag column becomes the model id."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return _read_trec(fh)
    return _read_trec(source)


def _read_trec(fh: IO[str]) -> Run:
    per_query: dict[str, list[RunEntry]] = {}
    model_id = ""
    for line_no, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 6:
            raise MalformedRow(line_no, f"expected 6 columns, got {len(cols)}")
        qid, _, doc_id, rank_text, score_text, tag = cols
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError:
            raise MalformedRow(line_no, "rank/score not numeric") from None
        if rank < 1:
            raise MalformedRow(line_no, f"rank {rank} is not 1-based")
        if not math.isfinite(score):
            raise MalformedRow(line_no, f"non-finite score {score_text}")
        if not model_id:
            model_id = tag
        per_query.setdefault(qid, []).append(RunEntry(doc_id=doc_id, score=score, rank=rank))

    run = Run(model_id=model_id)
    for qid, entries in per_query.items():
        entries.sort(key=lambda e: e.rank)
        seen: set[str] = set()
        for pos, e in enumerate(entries, start=1):
            if e.rank != pos:
                raise MalformedRow(0, f"query {qid!r}: ranks not contiguous at rank {e.rank}")
            if e.doc_id in seen:
                raise MalformedRow(0, f"query {qid!r}: duplicate doc {e.doc_id!r}")
            seen.add(e.doc_id)
        for prev, cur in zip(entries, entries[1:]):
            if cur.score > prev.score:
                raise MalformedRow(0, f"query {qid!r}: scores increase at rank {cur.rank}")
        run.entries[qid] = entries
    return run
