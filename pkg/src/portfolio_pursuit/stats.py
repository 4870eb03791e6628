"""Two-sample comparisons: Mann-Whitney U, Cohen's d and CLES."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.special import ndtr

EXACT_MAX_N = 20
ALTERNATIVES = ("two-sided", "greater", "less")


def _check(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"sample {name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"sample {name} has non-finite values")
    return a


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the mean of the ranks they span."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_null_distribution(ranks2: np.ndarray, n1: int) -> dict[int, int]:
    """Counts of each doubled rank sum over all size-n1 subsets.

    ``ranks2`` are doubled midranks (integers). Dynamic programming over
    items, tracking subset size and sum.
    """
    table: list[dict[int, int]] = [dict() for _ in range(n1 + 1)]
    table[0][0] = 1
    for r in ranks2:
        r = int(r)
        for size in range(min(n1, len(ranks2)), 0, -1):
            prev = table[size - 1]
            cur = table[size]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    return table[n1]


def mann_whitney_u(a: Sequence[float], b: Sequence[float], alternative: str = "two-sided",
                   method: str = "auto") -> tuple[float, float]:
    """Mann-Whitney U statistic for ``a`` and its p-value.

    ``alternative="greater"`` tests whether ``a`` tends to exceed ``b``.
    ``method`` is ``"exact"`` (permutation distribution over midranks),
    ``"normal"`` (tie-corrected normal approximation with continuity
    correction) or ``"auto"``, which is exact up to a combined size of 20.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    a = _check(a, "a")
    b = _check(b, "b")
    n1, n2 = len(a), len(b)
    N = n1 + n2
    ranks = midranks(np.concatenate([a, b]))
    r1 = ranks[:n1].sum()
    u = float(r1 - n1 * (n1 + 1) / 2.0)
    if np.all(ranks == ranks[0]):
        return u, 1.0
    if method == "auto":
        method = "exact" if N <= EXACT_MAX_N else "normal"

    if method == "exact":
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        dist = _u_null_distribution(ranks2, n1)
        total = math.comb(N, n1)
        r1_2 = int(round(2 * r1))
        p_le = sum(c for s, c in dist.items() if s <= r1_2) / total
        p_ge = sum(c for s, c in dist.items() if s >= r1_2) / total
        if alternative == "greater":
            p = p_ge
        elif alternative == "less":
            p = p_le
        else:
            p = min(1.0, 2.0 * min(p_le, p_ge))
        return u, float(p)

    if method != "normal":
        raise ValueError(f"unknown method {method!r}")
    _, counts = np.unique(ranks, return_counts=True)
    tie = (counts**3 - counts).sum()
    var = n1 * n2 / 12.0 * ((N + 1) - tie / (N * (N - 1)))
    mu = n1 * n2 / 2.0
    sd = math.sqrt(var)
    if alternative == "greater":
        p = 1.0 - ndtr((u - mu - 0.5) / sd)
    elif alternative == "less":
        p = ndtr((u - mu + 0.5) / sd)
    else:
        z = (abs(u - mu) - 0.5) / sd
        p = min(1.0, 2.0 * (1.0 - ndtr(z)))
    return u, float(p)


def cohens_d(a: Sequence[float], b: Sequence[float]) -> float:
    """Mean difference over the pooled (n - 1 weighted) standard deviation."""
    a = _check(a, "a")
    b = _check(b, "b")
    if len(a) < 2 or len(b) < 2:
        raise ValueError("Cohen's d needs at least two values per sample")
    pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (len(a) + len(b) - 2)
    if pooled <= 0:
        raise ValueError("pooled standard deviation is zero")
    return float((a.mean() - b.mean()) / math.sqrt(pooled))


def cles(a: Sequence[float], b: Sequence[float]) -> float:
    """Probability that a random draw from ``a`` beats one from ``b`` (ties count half)."""
    a = _check(a, "a")
    b = _check(b, "b")
    diff = a[:, None] - b[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)
