"""Accuracy and ranking metrics plus the Wilcoxon rank-sum (Mann-Whitney) test."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr

# both samples must exceed this size before the normal approximation is used
EXACT_MAX_SIZE = 8


def mae(predictions: Sequence[float], truths: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("mae of an empty list")
    return float(np.mean(np.abs(p - t)))


def dcg(gains: Sequence[float], k: int) -> float:
    g = np.asarray(gains, dtype=np.float64)[:k]
    return float(np.sum(g / np.log2(np.arange(2, g.size + 2))))


def ndcg_at_k(scored: Sequence[tuple[float, float]], k: int = 10) -> float:
    """NDCG@k with linear gain (the true rating) and log2(rank + 1) discount.

    ``scored`` holds (predicted, true_rating) pairs; ties in the prediction
    keep input order. Returns 1.0 when the ideal DCG is zero.
    """
    if not scored:
        raise ValueError("ndcg of an empty list")
    if k < 1:
        raise ValueError("k must be >= 1")
    preds = np.array([s[0] for s in scored], dtype=np.float64)
    gains = np.array([s[1] for s in scored], dtype=np.float64)
    if np.any(gains < 0):
        raise ValueError("gains must be non-negative")
    order = np.argsort(-preds, kind="stable")
    ideal = dcg(np.sort(gains)[::-1], k)
    if ideal == 0:
        return 1.0
    return min(1.0, dcg(gains[order], k) / ideal)


class RankSumResult(NamedTuple):
    statistic: float
    pvalue: float


def midranks(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _u_statistic(a, b) -> tuple[float, np.ndarray]:
    ranks = midranks(list(a) + list(b))
    n1 = len(a)
    return float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0), ranks


def _exact_distribution(ranks: np.ndarray, n1: int) -> dict[int, float]:
    """Probability of each doubled rank sum over all C(N, n1) subsets.

    Counted by dynamic programming over items, which enumerates the same
    subsets as brute force without materializing them.
    """
    doubled = np.rint(2 * ranks).astype(np.int64)
    top = int(np.sort(doubled)[::-1][:n1].sum())
    # table[j][s]: number of j-subsets of the items seen so far with doubled sum s
    table = np.zeros((n1 + 1, top + 1))
    table[0, 0] = 1.0
    for r in doubled:
        for j in range(min(n1, len(doubled)), 0, -1):
            table[j, r:] += table[j - 1, : top + 1 - r]
    total = math.comb(len(doubled), n1)
    return {s: c / total for s, c in enumerate(table[n1]) if c}


def exact_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) > len(b):
        # the two-sided p-value is symmetric; the DP is cheaper over the smaller sample
        return exact_pvalue(b, a)
    u, ranks = _u_statistic(a, b)
    n1 = len(a)
    observed = int(round(2 * (u + n1 * (n1 + 1) / 2.0)))
    dist = _exact_distribution(ranks, n1)
    lower = sum(p for s, p in dist.items() if s <= observed)
    upper = sum(p for s, p in dist.items() if s >= observed)
    return min(1.0, 2.0 * min(lower, upper))


def normal_pvalue(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-sided normal approximation with tie and continuity corrections."""
    u, ranks = _u_statistic(a, b)
    n1, n2 = len(a), len(b)
    n = n1 + n2
    _, tie_counts = np.unique(ranks, return_counts=True)
    ties = float(np.sum(tie_counts**3 - tie_counts))
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, 2.0 * float(ndtr(-z)))


def wilcoxon_rank_sum(a: Sequence[float], b: Sequence[float]) -> RankSumResult:
    """U statistic of ``a`` and a two-sided p-value.

    The p-value is exact when either sample has at most ``EXACT_MAX_SIZE``
    values, otherwise it comes from the normal approximation.
    """
    if len(a) < 1 or len(b) < 1:
        raise ValueError("both samples need at least one value")
    u, ranks = _u_statistic(a, b)
    if np.all(ranks == ranks[0]):
        return RankSumResult(u, 1.0)
    if len(a) > EXACT_MAX_SIZE and len(b) > EXACT_MAX_SIZE:
        return RankSumResult(u, normal_pvalue(a, b))
    return RankSumResult(u, exact_pvalue(a, b))


class FiveNumber(NamedTuple):
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def five_number(values: Sequence[float]) -> FiveNumber:
    """Box-plot summary; quartiles use linear interpolation."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("five-number summary of an empty list")
    q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
    return FiveNumber(*(float(v) for v in q))
