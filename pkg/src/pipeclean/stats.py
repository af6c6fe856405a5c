"""Statistical report math: exact Wilcoxon signed-rank, Spearman rank
correlation, and convergence detection over reward logs.

The Wilcoxon p-value is exact (full sign-assignment distribution, conditional
on the observed tied ranks) whenever the effective sample is <= 25 pairs, and
a tie-corrected normal approximation above that. Zero differences are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import norm, rankdata, t as t_dist

EXACT_LIMIT = 25


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_effective: int
    alternative: str
    method: str  # exact | normal-approx | degenerate


def _wplus_distribution(ranks) -> dict:
    """Counts of each achievable W+ over all 2^n sign assignments; ranks are
    midranks so keys are doubled to stay integral."""
    dist = {0: 1}
    for r in ranks:
        step = int(round(2 * r))
        new = {}
        for s, c in dist.items():
            new[s] = new.get(s, 0) + c
            new[s + step] = new.get(s + step, 0) + c
        dist = new
    return dist


def wilcoxon_signed_rank(x, y, alternative: str = "two-sided") -> TestResult:
    """Paired signed-rank test.

    two-sided: statistic = min(W+, W-), p = min(1, 2 * P(W+ <= statistic)).
    greater/less: statistic = W+, tail probability in the stated direction.
    """
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 1:
        raise ValueError("x and y must be equal-length non-empty vectors")
    d = x - y
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return TestResult(0.0, 1.0, 0, alternative, "degenerate")
    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus) if alternative == "two-sided" else w_plus

    if n <= EXACT_LIMIT:
        dist = _wplus_distribution(ranks)
        total = 2 ** n
        def cdf_le(w):
            lim = int(round(2 * w))
            return Fraction(sum(c for s, c in dist.items() if s <= lim), total)
        def cdf_ge(w):
            lim = int(round(2 * w))
            return Fraction(sum(c for s, c in dist.items() if s >= lim), total)
        if alternative == "two-sided":
            p = min(Fraction(1), 2 * cdf_le(statistic))
        elif alternative == "greater":
            p = cdf_ge(w_plus)
        else:
            p = cdf_le(w_plus)
        return TestResult(statistic, float(p), n, alternative, "exact")

    mn = n * (n + 1) / 4.0
    tie_counts = np.unique(ranks, return_counts=True)[1]
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_counts ** 3) - tie_counts).sum()) / 48.0
    se = np.sqrt(var)
    if alternative == "two-sided":
        z = (statistic - mn) / se
        p = min(1.0, 2.0 * norm.cdf(z))
    elif alternative == "greater":
        p = norm.sf((w_plus - mn) / se)
    else:
        p = norm.cdf((w_plus - mn) / se)
    return TestResult(statistic, float(p), n, alternative, "normal-approx")


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p_value: float
    n: int
    flagged: bool = False


def spearman(x, y) -> SpearmanResult:
    """Rank correlation with midrank ties; p from the t approximation
    (approximate at small n). Constant input flags an undefined result."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise ValueError("x and y must be equal-length vectors of >= 3 entries")
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    sx, sy = np.std(rx), np.std(ry)
    if sx == 0 or sy == 0:
        return SpearmanResult(float("nan"), float("nan"), len(x), flagged=True)
    rho = float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))
    if 1.0 - abs(rho) < 1e-12:  # perfectly monotone pairs are exactly +/-1
        rho = float(np.sign(rho))
    n = len(x)
    if abs(rho) >= 1.0:
        return SpearmanResult(rho, 0.0, n)
    t_stat = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * t_dist.sf(abs(t_stat), df=n - 2))
    return SpearmanResult(rho, p, n)


def detect_convergence(values, window: int = 100, span: int = 500,
                       tol: float = 1e-3):
    """Earliest 1-based index at which the `window`-entry rolling mean has
    varied by less than `tol` over the previous `span` entries; None if never.

    A constant series converges exactly at window + span.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        raise ValueError("empty log")
    if n < window + span:
        return None
    csum = np.concatenate([[0.0], np.cumsum(values)])
    roll = (csum[window:] - csum[:-window]) / window  # roll[i] = mean ending at entry window+i
    win = np.lib.stride_tricks.sliding_window_view(roll, span + 1)
    spread = win.max(axis=1) - win.min(axis=1)
    hits = np.nonzero(spread < tol)[0]
    if len(hits) == 0:
        return None
    # hits[0] indexes the window of rolling means ending at entry window+span+hits[0]
    return int(window + span + hits[0])
