"""Score-distribution selection estimators computed from retrieval runs.

Each estimator maps one query's top-k score list (plus a corpus baseline
score where needed) to a scalar; per-collection aggregation is the mean over
queries.  Definitions are pinned here so results are reproducible:

    nqc      population std of scores / max(|corpus_score|, 1e-9)
    smv      mean of s'_i * |ln(s'_i / mean(s'))| / max(|corpus_score|, 1e-6),
             where s' is the raw list when min > 0, else shifted by -min + 1e-6
    sigma    max over cutoffs x of the population std of the top-x scores
    wig      mean of (s_i - corpus_score)
    entropy  mean binary entropy of min-max-normalized scores

The corpus baseline is the similarity of the query vector to the centroid of
all document vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import EmptyInput, NoQueries
from .retrieval import SIM_COSINE, SIM_DOT, _as_query_vector

HIGHER_IS_BETTER = "higher_is_better"
LOWER_IS_BETTER = "lower_is_better"

NQC_EPS = 1e-9
SMV_EPS = 1e-6


@dataclass(frozen=True)
class MethodScore:
    model_id: str
    method: str
    value: float
    direction: str


@dataclass
class QueryScoreList:
    """One query's retrieval scores (non-increasing) and its corpus baseline."""

    query_id: str
    scores: list[float]
    corpus_score: float = 0.0

    def __post_init__(self):
        if len(self.scores) == 0:
            raise EmptyInput(f"query {self.query_id!r} has no scores")
        arr = np.asarray(self.scores, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ValueError(f"query {self.query_id!r} has non-finite scores")
        if np.any(np.diff(arr) > 0):
            raise ValueError(f"query {self.query_id!r} scores are not non-increasing")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)


def minmax_normalize(scores) -> np.ndarray:
    """Affine map onto [0, 1]; a constant list maps to all 0.5."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("cannot normalize an empty list")
    if not np.isfinite(arr).all():
        raise ValueError("scores contain non-finite values")
    lo, hi = float(arr.min()), float(arr.max())
    if hi == lo:
        return np.full(arr.shape, 0.5)
    return (arr - lo) / (hi - lo)


def corpus_centroid_score(matrix: EmbeddingMatrix, query_vec, sim: str) -> float:
    """Similarity of the query to the component-wise mean of all documents.

    Cosine follows the retrieval convention: zero-norm on either side is 0.0.
    """
    q = _as_query_vector(query_vec, matrix.dim)
    centroid = matrix.vectors.astype(np.float64).mean(axis=0)
    dot = float(centroid @ q)
    if sim == SIM_DOT:
        return dot
    if sim == SIM_COSINE:
        denom = float(np.linalg.norm(centroid)) * float(np.linalg.norm(q))
        return dot / denom if denom != 0.0 else 0.0
    raise ValueError(f"unknown similarity {sim!r}")


def nqc(q: QueryScoreList) -> float:
    scores = q.as_array()
    return float(scores.std()) / max(abs(q.corpus_score), NQC_EPS)


def smv(q: QueryScoreList) -> float:
    scores = q.as_array()
    if scores.min() > 0:
        shifted = scores
    else:
        shifted = scores - scores.min() + SMV_EPS
    mean = shifted.mean()
    value = float(np.mean(shifted * np.abs(np.log(shifted / mean))))
    return value / max(abs(q.corpus_score), SMV_EPS)


def sigma_max(q: QueryScoreList) -> float:
    scores = q.as_array()
    return max(float(scores[:x].std()) for x in range(1, len(scores) + 1))


def wig(q: QueryScoreList) -> float:
    scores = q.as_array()
    return float(np.mean(scores - q.corpus_score))


def binary_entropy(q: QueryScoreList) -> float:
    p = minmax_normalize(q.as_array())
    return float(np.mean(_entropy_bits(p)))


def _entropy_bits(p: np.ndarray) -> np.ndarray:
    # 0*log(0) := 0 at both endpoints
    out = np.zeros_like(p)
    interior = (p > 0.0) & (p < 1.0)
    pi = p[interior]
    out[interior] = -pi * np.log2(pi) - (1.0 - pi) * np.log2(1.0 - pi)
    return out


def aggregate(per_query: list[float], method: str, model_id: str, direction: str) -> MethodScore:
    """Collapse per-query values to one MethodScore via the arithmetic mean.

    Uses exact summation so the result is independent of query order.
    """
    if not per_query:
        raise NoQueries(f"no per-query values for {method} on {model_id}")
    value = math.fsum(per_query) / len(per_query)
    return MethodScore(model_id=model_id, method=method, value=value, direction=direction)
