"""Data-quality state: a fixed 9-component observation of the current table
relative to a frozen reference snapshot.

Layout (order is part of the contract):
    [missing_rate, w1_drift, skew_mean, kurt_mean, balance, retention,
     h_impute, h_outlier, h_scale]

The drift component is the mean over numeric columns of the column-wise
Wasserstein-1 distance to the reference, normalized by the reference standard
deviation and capped at 5 per column. Sorting gives the exact value in
O(n log n) per column; no approximation is involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaMismatchError
from .table import Table

W1_CAP = 5.0


@dataclass(frozen=True)
class QualityState:
    r_miss: float
    w1: float
    skew_mean: float
    kurt_mean: float
    balance: float
    retention: float
    h_imp: float
    h_out: float
    h_scl: float

    def as_array(self) -> np.ndarray:
        return np.array([
            self.r_miss, self.w1, self.skew_mean, self.kurt_mean,
            self.balance, self.retention, self.h_imp, self.h_out, self.h_scl,
        ], dtype=np.float64)


@dataclass(frozen=True)
class ReferenceProfile:
    """Frozen snapshot taken at observer reset: per-numeric-column sorted
    samples and standard deviations, the original row count, and class counts."""

    column_names: tuple
    sorted_values: dict      # numeric column name -> sorted non-missing values
    sigma_ref: dict          # numeric column name -> population std
    n0: int
    class_counts: dict


def reset(t: Table) -> ReferenceProfile:
    sorted_values = {}
    sigma_ref = {}
    for c in t.numeric_feature_columns():
        obs = np.sort(c.non_missing())
        sorted_values[c.name] = obs
        sigma_ref[c.name] = float(np.std(obs)) if len(obs) else 0.0
    counts = t.class_counts() if t.label is not None else {}
    return ReferenceProfile(
        column_names=tuple(c.name for c in t.columns),
        sorted_values=sorted_values,
        sigma_ref=sigma_ref,
        n0=t.n_rows,
        class_counts=counts,
    )


def w1_sorted(x: np.ndarray, y: np.ndarray) -> float:
    """Exact Wasserstein-1 between two empirical distributions.

    Computed as the integral of |F_x - F_y| over the merged sample support,
    which equals the quantile-function integral for one-dimensional samples.
    Inputs may have different sizes; both must be non-empty.
    """
    xs = np.sort(np.asarray(x, dtype=np.float64))
    ys = np.sort(np.asarray(y, dtype=np.float64))
    allv = np.concatenate([xs, ys])
    allv.sort(kind="mergesort")
    deltas = np.diff(allv)
    cdf_x = np.searchsorted(xs, allv[:-1], side="right") / len(xs)
    cdf_y = np.searchsorted(ys, allv[:-1], side="right") / len(ys)
    return float(np.sum(np.abs(cdf_x - cdf_y) * deltas))


def wasserstein1_normalized(current: Table, ref: ReferenceProfile) -> float:
    """Mean over numeric columns of min(W1/sigma_ref, cap); constant or
    near-empty columns contribute 0."""
    if tuple(c.name for c in current.columns) != ref.column_names:
        raise SchemaMismatchError("current table schema differs from reference")
    contributions = []
    for c in current.numeric_feature_columns():
        ref_vals = ref.sorted_values.get(c.name)
        if ref_vals is None:
            raise SchemaMismatchError(f"column {c.name!r} missing from reference")
        sigma = ref.sigma_ref[c.name]
        cur = c.non_missing()
        if sigma == 0.0 or len(ref_vals) < 2 or len(cur) < 2:
            contributions.append(0.0)
            continue
        contributions.append(min(w1_sorted(cur, ref_vals) / sigma, W1_CAP))
    return float(np.mean(contributions)) if contributions else 0.0


def _moments(x: np.ndarray):
    mu = float(np.mean(x))
    d = x - mu
    m2 = float(np.mean(d * d))
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return m2, m3, m4


def column_skewness(x: np.ndarray) -> float:
    """Moment-based sample skewness (no bias correction); 0 for constant input."""
    m2, m3, _ = _moments(x)
    if m2 == 0.0:
        return 0.0
    return m3 / m2 ** 1.5


def column_excess_kurtosis(x: np.ndarray) -> float:
    """Moment-based excess kurtosis (no bias correction); 0 for constant input."""
    m2, _, m4 = _moments(x)
    if m2 == 0.0:
        return 0.0
    return m4 / (m2 * m2) - 3.0


def mean_abs_skewness(t: Table) -> float:
    vals = []
    for c in t.numeric_feature_columns():
        obs = c.non_missing()
        vals.append(abs(column_skewness(obs)) if len(obs) >= 3 else 0.0)
    return float(np.mean(vals)) if vals else 0.0


def mean_abs_kurtosis(t: Table) -> float:
    vals = []
    for c in t.numeric_feature_columns():
        obs = c.non_missing()
        vals.append(abs(column_excess_kurtosis(obs)) if len(obs) >= 4 else 0.0)
    return float(np.mean(vals)) if vals else 0.0


def missing_rate(t: Table) -> float:
    """Mean per-column missing rate over all columns (= flat cell ratio)."""
    return float(np.mean([c.mask.mean() for c in t.columns]))


def class_balance(t: Table) -> float:
    if t.label is None:
        return 0.0
    counts = list(t.class_counts().values())
    if not counts or max(counts) == 0:
        return 0.0
    return min(counts) / max(counts)


def observe(t: Table, ref: ReferenceProfile, history=(0, 0, 0)) -> QualityState:
    """Build the 9-component state for the current table against the frozen
    reference; the three history bits are copied through unchanged."""
    if len(history) != 3:
        raise ValueError("history must carry exactly 3 bits")
    return QualityState(
        r_miss=missing_rate(t),
        w1=wasserstein1_normalized(t, ref),
        skew_mean=mean_abs_skewness(t),
        kurt_mean=mean_abs_kurtosis(t),
        balance=class_balance(t),
        retention=t.n_rows / ref.n0,
        h_imp=float(history[0]),
        h_out=float(history[1]),
        h_scl=float(history[2]),
    )
