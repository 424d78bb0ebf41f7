"""Reciprocal rank fusion, pseudo-qrels, and the evaluation metrics
(nDCG@10, Kendall tau, delta-best) used by the fusion method and by
meta-evaluation when real judgments exist."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .corpus import Qrels
from .errors import DegenerateScores, QuerySetMismatch, TooFewModels
from .qpp import HIGHER_IS_BETTER, MethodScore
from .retrieval import Run


@dataclass
class FusedRanking:
    """Per query, documents ordered by fused score (desc, doc_id tie-break)."""

    per_query: dict[str, list[tuple[str, float]]] = field(default_factory=dict)


def rrf_fuse(runs: Sequence[Run], c: float = 60.0) -> FusedRanking:
    """fused(d) = sum over runs of 1 / (c + rank(d)); absent docs add 0."""
    if len(runs) < 2:
        raise TooFewModels(f"fusion needs at least 2 runs, got {len(runs)}")
    if c <= 0:
        raise ValueError(f"rrf constant must be positive, got {c}")
    query_ids = runs[0].query_ids()
    for run in runs[1:]:
        if run.query_ids() != query_ids:
            raise QuerySetMismatch(
                f"run {run.model_id!r} covers different queries than {runs[0].model_id!r}"
            )
    fused = FusedRanking()
    for qid in runs[0].entries:
        scores: dict[str, float] = {}
        for run in runs:
            for entry in run.entries[qid]:
                scores[entry.doc_id] = scores.get(entry.doc_id, 0.0) + 1.0 / (c + entry.rank)
        fused.per_query[qid] = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return fused


def pseudo_qrels_from_fused(fused: FusedRanking, depth: int = 10) -> Qrels:
    """Grade the fused top-`depth` docs: the top doc gets `depth`, then
    decreasing by one; everything deeper stays unjudged."""
    if depth <= 0:
        raise ValueError(f"depth must be positive, got {depth}")
    qrels: Qrels = {}
    for qid, ranking in fused.per_query.items():
        qrels[qid] = {doc_id: depth - pos for pos, (doc_id, _) in enumerate(ranking[:depth])}
    return qrels


def ndcg_at_k(ranking: Sequence[str], qrels_for_query: Mapping[str, int], k: int = 10) -> float:
    """Exponential-gain nDCG: DCG = sum (2^rel - 1) / log2(i + 1), i 1-based.

    Returns 0.0 when the query has no relevant documents.
    """
    ideal = sorted((g for g in qrels_for_query.values() if g > 0), reverse=True)[:k]
    if not ideal:
        return 0.0
    idcg = sum((2.0 ** g - 1.0) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    dcg = 0.0
    for i, doc_id in enumerate(ranking[:k], start=1):
        grade = qrels_for_query.get(doc_id, 0)
        if grade > 0:
            dcg += (2.0 ** grade - 1.0) / math.log2(i + 1)
    return dcg / idcg


def mean_ndcg_at_k(run: Run, qrels: Qrels, k: int = 10) -> float:
    """Macro average of nDCG@k over the run's queries (missing qrels count 0)."""
    if not run.entries:
        raise DegenerateScores("run has no queries")
    total = 0.0
    for qid in run.entries:
        total += ndcg_at_k(run.ranking_for(qid), qrels.get(qid, {}), k)
    return total / len(run.entries)


def fusion_method_score(
    run: Run,
    pseudo: Qrels,
    similarity: Callable[[Run, Qrels], float] | None = None,
) -> MethodScore:
    """Agreement of one model's run with the fused pseudo-judgments.

    The default similarity is mean nDCG@10 against the pseudo-qrels; any
    callable with the same shape may be substituted.
    """
    fn = similarity if similarity is not None else mean_ndcg_at_k
    value = fn(run, pseudo)
    return MethodScore(model_id=run.model_id, method="fusion", value=value, direction=HIGHER_IS_BETTER)


def kendall_tau(rank_a: Sequence[str], rank_b: Sequence[str]) -> float:
    """(concordant - discordant) / (n * (n - 1) / 2) over all item pairs.

    Both arguments must order the same duplicate-free id set.
    """
    if len(set(rank_a)) != len(rank_a) or len(set(rank_b)) != len(rank_b):
        raise ValueError("rankings contain duplicate ids")
    if set(rank_a) != set(rank_b):
        raise ValueError("rankings cover different id sets")
    n = len(rank_a)
    if n < 2:
        return 1.0
    pos_b = {item: i for i, item in enumerate(rank_b)}
    sequence = [pos_b[item] for item in rank_a]
    discordant = _count_inversions(sequence)
    pairs = n * (n - 1) // 2
    return (pairs - 2 * discordant) / pairs


def _count_inversions(seq: list[int]) -> int:
    # merge-sort inversion count; the O(n^2) pair scan lives in the tests
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    count = _count_inversions(left) + _count_inversions(right)
    merged = []
    i = j = 0
    while i < len(left) and j < len(right):
        if left[i] <= right[j]:
            merged.append(left[i])
            i += 1
        else:
            count += len(left) - i
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    seq[:] = merged
    return count


def delta_best(true_scores: Mapping[str, float], selected: str) -> float:
    """Percent effectiveness drop of `selected` relative to the pool's best."""
    if selected not in true_scores:
        raise ValueError(f"selected model {selected!r} has no true score")
    best = max(true_scores.values())
    if best == 0.0:
        raise DegenerateScores("all true scores are zero")
    return 100.0 * (best - true_scores[selected]) / best
