"""Nonparametric tests and least-squares slope inference.

The signed-rank and rank-sum tests compute exact p-values by enumerating the
permutation distribution whenever the sample is small enough, falling back to
a tie-corrected normal approximation beyond that. Exactness for small n is a
hard contract here: several downstream comparisons run on 3-12 observations
where the approximation is meaningfully wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .errors import DegenerateInputError, ValidationError

EXACT_LIMIT = 25  # full 2^n enumeration up to this many nonzero differences

ALTERNATIVES = ("greater", "two-sided")


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # W+ = sum of ranks of positive differences
    p_value: float
    n: int  # effective sample size after dropping zeros
    alternative: str
    exact: bool


@dataclass(frozen=True)
class RankSumResult:
    statistic: float  # rank sum of the first sample
    p_value: float
    n_a: int
    n_b: int
    alternative: str
    exact: bool
    tied: bool = False


@dataclass(frozen=True)
class OLSResult:
    slope: float
    intercept: float
    slope_p_value: float
    ci95: tuple[float, float]
    n_points: int
    degenerate_fit: bool = False


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1  # average of positions i..j, 1-based
        i = j + 1
    return ranks


def _signed_rank_tail_counts(scaled_ranks: list[int], threshold: int) -> tuple[int, int]:
    """Counts of sign assignments with scaled W+ >= threshold and <= threshold.

    Dynamic program over the distribution of subset sums of ``scaled_ranks``
    (each rank is either in the positive set or not); equivalent to the full
    2^n enumeration but polynomial in the total rank sum.
    """
    total = sum(scaled_ranks)
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in scaled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    ge = int(sum(counts[threshold:]))
    le = int(sum(counts[: threshold + 1]))
    return ge, le


def wilcoxon_signed_rank(diffs, alternative: str = "greater") -> WilcoxonResult:
    """Signed-rank test on paired differences.

    Zero differences are dropped before ranking; ties in |difference| receive
    average ranks. The statistic is W+ (rank sum of the positive differences).
    ``greater`` tests whether the differences tend to be positive.
    """
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}")
    d = np.asarray(diffs, dtype=float)
    if d.ndim != 1:
        raise ValidationError("diffs must be one-dimensional")
    if not np.all(np.isfinite(d)):
        raise ValidationError("diffs must be finite")
    d = d[d != 0]
    n = len(d)
    if n == 0:
        raise DegenerateInputError("all differences are zero")

    ranks = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_LIMIT:
        # Average ranks move in half-integer steps; doubling makes them exact ints.
        scaled = [int(round(2 * r)) for r in ranks]
        w_scaled = int(round(2 * w_plus))
        ge, le = _signed_rank_tail_counts(scaled, w_scaled)
        denom = 2**n
        if alternative == "greater":
            p = ge / denom
        else:
            p = min(1.0, 2 * min(ge, le) / denom)
        return WilcoxonResult(w_plus, p, n, alternative, exact=True)

    mean = n * (n + 1) / 4
    tie_sizes = np.unique(np.abs(d), return_counts=True)[1]
    var = n * (n + 1) * (2 * n + 1) / 24 - float(((tie_sizes**3 - tie_sizes) / 48).sum())
    sd = math.sqrt(var)
    z = (w_plus - mean) / sd
    if alternative == "greater":
        p = float(_scipy_stats.norm.sf(z))
    else:
        p = float(2 * _scipy_stats.norm.sf(abs(z)))
    return WilcoxonResult(w_plus, min(1.0, p), n, alternative, exact=False)


def _rank_sum_tail_counts(scaled_ranks: list[int], n_a: int, threshold: int) -> tuple[int, int]:
    """Counts of size-``n_a`` subsets with scaled rank sum >= / <= threshold."""
    total = sum(scaled_ranks)
    # counts[k][s] = number of k-subsets with sum s
    counts = [np.zeros(total + 1, dtype=object) for _ in range(n_a + 1)]
    counts[0][0] = 1
    for r in scaled_ranks:
        for k in range(n_a, 0, -1):
            shifted = np.zeros(total + 1, dtype=object)
            shifted[r:] = counts[k - 1][: total + 1 - r]
            counts[k] = counts[k] + shifted
    ge = int(sum(counts[n_a][threshold:]))
    le = int(sum(counts[n_a][: threshold + 1]))
    return ge, le


def rank_sum_test(a, b, alternative: str = "greater") -> RankSumResult:
    """Two-sample rank-sum test (unpaired replicates).

    ``greater`` tests whether values in ``a`` tend to exceed those in ``b``.
    Exact permutation p when C(n_a + n_b, n_a) is modest, else normal with
    tie correction.
    """
    if alternative not in ALTERNATIVES:
        raise ValidationError(f"alternative must be one of {ALTERNATIVES}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or len(a) == 0 or len(b) == 0:
        raise ValidationError("both samples must be non-empty 1-D sequences")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("samples must be finite")
    pooled = np.concatenate([a, b])
    ranks = _average_ranks(pooled)
    n_a, n_b = len(a), len(b)
    w = float(ranks[:n_a].sum())
    tie_sizes = np.unique(pooled, return_counts=True)[1]
    tied = bool((tie_sizes > 1).any())

    if math.comb(n_a + n_b, n_a) <= 500_000:
        scaled = [int(round(2 * r)) for r in ranks]
        w_scaled = int(round(2 * w))
        ge, le = _rank_sum_tail_counts(scaled, n_a, w_scaled)
        denom = math.comb(n_a + n_b, n_a)
        if alternative == "greater":
            p = ge / denom
        else:
            p = min(1.0, 2 * min(ge, le) / denom)
        return RankSumResult(w, p, n_a, n_b, alternative, exact=True, tied=tied)

    n = n_a + n_b
    mean = n_a * (n + 1) / 2
    tie_term = float(((tie_sizes**3 - tie_sizes)).sum()) / (n * (n - 1))
    var = n_a * n_b / 12 * ((n + 1) - tie_term)
    z = (w - mean) / math.sqrt(var)
    if alternative == "greater":
        p = float(_scipy_stats.norm.sf(z))
    else:
        p = float(2 * _scipy_stats.norm.sf(abs(z)))
    return RankSumResult(w, min(1.0, p), n_a, n_b, alternative, exact=False, tied=tied)


def ols_slope_test(points) -> OLSResult:
    """Least-squares line fit with a two-sided t-test on the slope.

    ``points`` is a sequence of (x, y). Needs at least 3 points and 2 distinct
    x values. The 95% CI uses the t critical value with n-2 degrees of
    freedom. A perfectly collinear sample has no residual variance; it is
    reported with ``degenerate_fit=True`` and p = 0.
    """
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValidationError("need at least 3 points for slope inference")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.unique(x).size < 2:
        raise ValidationError("need at least 2 distinct x values")
    n = len(pts)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    sse = float((resid**2).sum())
    if sse <= 1e-24 * max(1.0, float((y**2).sum())):
        # perfectly collinear: no residual variance to test against. A nonzero
        # slope is then unambiguous (p=0); a flat line carries no slope evidence.
        p_degenerate = 0.0 if slope != 0 else 1.0
        return OLSResult(slope, intercept, p_degenerate, (slope, slope), n, degenerate_fit=True)
    s2 = sse / (n - 2)
    se = math.sqrt(s2 / sxx)
    t = slope / se
    p = float(2 * _scipy_stats.t.sf(abs(t), n - 2))
    tc = float(_scipy_stats.t.ppf(0.975, n - 2))
    return OLSResult(slope, intercept, p, (slope - tc * se, slope + tc * se), n)
