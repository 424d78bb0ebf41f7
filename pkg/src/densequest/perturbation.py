"""Encoder-dependent selection signals: query-term masking sensitivity and
the simplified pseudo-query method (generated queries judged by their source
document)."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document, Query, Qrels
from .errors import NoPseudoQueries, NoUsableQueries
from .fusion import ndcg_at_k
from .qpp import HIGHER_IS_BETTER, LOWER_IS_BETTER, MethodScore
from .retrieval import Run

ALTERATION_EPS = 1e-9


@dataclass(frozen=True)
class QueryVariant:
    parent_query_id: str
    dropped_term_index: int
    text: str


@dataclass(frozen=True)
class PseudoQuery:
    id: str
    source_doc_id: str
    text: str


def mask_variants(query: Query, cap: int = 16, seed: int = 7) -> list[QueryVariant]:
    """One variant per whitespace token with that token removed.

    Queries with more than `cap` tokens get a seeded uniform sample of `cap`
    term indices (deterministic per query, independent of processing order);
    single-token queries yield no variants.
    """
    tokens = query.text.split()
    if len(tokens) < 2:
        return []
    indices = list(range(len(tokens)))
    if len(tokens) > cap:
        rng = random.Random(f"{seed}:{query.id}")
        indices = sorted(rng.sample(indices, cap))
    variants = []
    for idx in indices:
        text = " ".join(tokens[:idx] + tokens[idx + 1:])
        variants.append(QueryVariant(parent_query_id=query.id, dropped_term_index=idx, text=text))
    return variants


def alteration_query_value(variant_scores, original_scores) -> float:
    """Score variability of the originally retrieved documents under masking.

    `variant_scores[j][i]` is the similarity of variant j to document i of the
    original top-k list.  The value is the mean per-document population std,
    normalized by the magnitude of the mean original score.
    """
    variants = np.asarray(variant_scores, dtype=np.float64)
    original = np.asarray(original_scores, dtype=np.float64)
    if variants.ndim != 2 or variants.shape[1] != original.shape[0]:
        raise ValueError(
            f"variant score matrix {variants.shape} does not cover {original.shape[0]} documents"
        )
    per_doc_std = variants.std(axis=0)
    return float(per_doc_std.mean()) / max(abs(float(original.mean())), ALTERATION_EPS)


def alteration_method_score(
    model_id: str,
    per_query_values: Sequence[float],
    direction: str = LOWER_IS_BETTER,
) -> MethodScore:
    """Mean masking sensitivity over the queries that produced variants."""
    if len(per_query_values) == 0:
        raise NoUsableQueries("every query is single-token; masking produced no variants")
    value = float(np.mean(np.asarray(per_query_values, dtype=np.float64)))
    return MethodScore(model_id=model_id, method="query_alteration", value=value, direction=direction)


def sample_docs(corpus: Sequence[Document], n: int = 100, seed: int = 7) -> list[Document]:
    """Seeded uniform sample without replacement, capped at the corpus size."""
    if n <= 0:
        raise ValueError(f"sample size must be positive, got {n}")
    rng = random.Random(seed)
    return rng.sample(list(corpus), min(n, len(corpus)))


def pseudo_qrels_for(pseudo_queries: Sequence[PseudoQuery]) -> Qrels:
    """Each pseudo-query judges exactly its source document relevant."""
    return {pq.id: {pq.source_doc_id: 1} for pq in pseudo_queries}


def larmor_score(model_id: str, pseudo_queries: Sequence[PseudoQuery], run: Run) -> MethodScore:
    """Mean nDCG@10 of the model's pseudo-query runs against the source-doc
    judgments; depends only on where each source document lands."""
    if not pseudo_queries:
        raise NoPseudoQueries("no pseudo-queries were generated")
    qrels = pseudo_qrels_for(pseudo_queries)
    total = 0.0
    for pq in pseudo_queries:
        entries = run.entries.get(pq.id)
        if entries is None:
            raise ValueError(f"run is missing pseudo-query {pq.id!r}")
        total += ndcg_at_k([e.doc_id for e in entries], qrels[pq.id], k=10)
    value = total / len(pseudo_queries)
    return MethodScore(model_id=model_id, method="larmor", value=value, direction=HIGHER_IS_BETTER)
