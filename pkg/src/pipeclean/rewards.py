"""The seven reward functions scoring a cleaned table against a frozen
reference, plus the cross-validated forest accuracy they share.

Kinds and their published weight sets:

* R1 completeness   : (1 - missing/total) * sqrt(retention)
* R2 accuracy       : 3-fold CV forest accuracy
* R3 multiobjective : 0.50*acc + 0.30*ret + 0.20*Q - 0.10*W1
* R4 driftpenalty   : 0.70*acc + 0.20*ret + 0.10*Q - 0.50*W1
* R5 incremental    : clip(5 * (R3_now - R3_prev))
* R6 distortion     : 1 - weighted five-component distribution shift
* R7 tfmaware       : 0.50*acc_ext + 0.35*ret^2 + 0.15*Q - 0.05*W1

All rewards are clipped to [-1, 1]. An empty table scores -1. R7's accuracy
comes from the configured evaluation harness (reward protocol); R2-R4 always
use the built-in forest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError, InputError, RewardError
from .evaluators import EvaluationHarness, ReferenceForestEvaluator
from .observer import (ReferenceProfile, mean_abs_skewness, missing_rate,
                       reset as observer_reset, wasserstein1_normalized)
from .table import Table, row_fingerprints, table_fingerprint

REWARD_KINDS = ("R1", "R2", "R3", "R4", "R5", "R6", "R7")

REWARD_ALIASES = {
    "completeness": "R1",
    "accuracy": "R2",
    "multiobjective": "R3",
    "driftpenalty": "R4",
    "incremental": "R5",
    "distortion": "R6",
    "tfmaware": "R7",
    "distortion_acc": "R6B",  # runner-only variant: 0.5*acc + 0.5*R6
}

R3_WEIGHTS = (0.50, 0.30, 0.20, 0.10)
R4_WEIGHTS = (0.70, 0.20, 0.10, 0.50)
R7_WEIGHTS = (0.50, 0.35, 0.15, 0.05)
R5_SCALE = 5.0
R6_WEIGHTS = (0.30, 0.25, 0.20, 0.15, 0.10)
JS_BINS = 50


def canonical_kind(kind: str) -> str:
    k = kind.strip()
    upper = k.upper()
    if upper in REWARD_KINDS or upper == "R6B":
        return upper
    low = k.lower()
    if low in REWARD_ALIASES:
        return REWARD_ALIASES[low]
    raise InputError(f"unknown reward kind {kind!r}")


def clip_reward(x: float) -> float:
    return float(min(1.0, max(-1.0, x)))


def quality_score(t: Table) -> float:
    """(1 - missing rate) * (1 - duplicate-row rate), both over the whole table."""
    r_miss = missing_rate(t)
    fps = row_fingerprints(t)
    r_dup = (t.n_rows - len(set(fps))) / t.n_rows
    return (1.0 - r_miss) * (1.0 - r_dup)


def rf_cv_accuracy(t: Table, seed: int = 42, cache: dict | None = None) -> float:
    """Stratified 3-fold cross-validated accuracy of the reference forest on the
    full table; folds are assigned round-robin per class for determinism."""
    if t.label is None:
        raise InputError("reward needs a labeled table")
    key = ("rfcv", table_fingerprint(t), seed)
    if cache is not None and key in cache:
        return cache[key]
    y = t.labels_as_codes()
    if len(np.unique(y)) < 2:
        raise DegenerateDataError("cannot cross-validate a single-class table")
    X = t.feature_matrix()
    n_splits = min(3, t.n_rows)
    folds = np.zeros(t.n_rows, dtype=np.int64)
    for cls in np.unique(y):
        rows = np.nonzero(y == cls)[0]
        folds[rows] = np.arange(len(rows)) % n_splits
    forest = ReferenceForestEvaluator()
    accs = []
    for f in range(n_splits):
        test_idx = folds == f
        train_idx = ~test_idx
        if not test_idx.any() or len(np.unique(y[train_idx])) < 2:
            continue
        probs = forest.predict_proba(X[train_idx], y[train_idx], X[test_idx], seed=seed)
        accs.append(float((probs.argmax(axis=1) == y[test_idx]).mean()))
    if not accs:
        raise DegenerateDataError("no valid CV fold")
    acc = float(np.mean(accs))
    if cache is not None:
        cache[key] = acc
    return acc


# ---------------------------------------------------------------------------
# Distribution-shift components (distortion reward)


def js_divergence_binned(x: np.ndarray, y: np.ndarray, bins: int = JS_BINS) -> float:
    """Jensen-Shannon divergence (natural log) between shared-range histograms."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) == 0 or len(y) == 0:
        return 0.0
    lo = min(x.min(), y.min())
    hi = max(x.max(), y.max())
    if lo == hi:
        return 0.0
    p, _ = np.histogram(x, bins=bins, range=(lo, hi))
    q, _ = np.histogram(y, bins=bins, range=(lo, hi))
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / b[nz])))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def correlation_matrix(t: Table) -> np.ndarray:
    """Pairwise Pearson correlation over mutually observed cells of numeric
    feature columns; undefined pairs contribute 0."""
    cols = t.numeric_feature_columns()
    p = len(cols)
    corr = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            both = ~cols[i].mask & ~cols[j].mask
            if both.sum() < 2:
                continue
            a = cols[i].values[both]
            b = cols[j].values[both]
            sa, sb = np.std(a), np.std(b)
            if sa == 0 or sb == 0:
                continue
            corr[i, j] = corr[j, i] = float(np.mean((a - np.mean(a)) * (b - np.mean(b))) / (sa * sb))
    return corr


def distortion_components(t: Table, ctx: "RewardContext") -> dict:
    """The five normalized [0,1] shift measures behind the distortion reward."""
    d_w1 = wasserstein1_normalized(t, ctx.ref_profile) / 5.0

    js_vals = []
    ref_sorted = ctx.ref_profile.sorted_values
    for c in t.numeric_feature_columns():
        ref_vals = ref_sorted.get(c.name)
        cur = c.non_missing()
        js_vals.append(js_divergence_binned(cur, ref_vals) / math.log(2.0)
                       if ref_vals is not None and len(ref_vals) else 0.0)
    d_js = float(np.mean(js_vals)) if js_vals else 0.0

    if len(t.numeric_feature_columns()) >= 2:
        c_now = correlation_matrix(t)
        c_ref = ctx.ref_corr
        denom = float(np.linalg.norm(c_ref))
        d_corr = min(float(np.linalg.norm(c_now - c_ref)) / denom, 1.0) if denom > 0 else 0.0
    else:
        d_corr = 0.0

    lv_vals = []
    for c in t.numeric_feature_columns():
        sigma_ref = ctx.ref_profile.sigma_ref.get(c.name, 0.0)
        cur = c.non_missing()
        sigma_now = float(np.std(cur)) if len(cur) >= 2 else 0.0
        if sigma_ref == 0.0 and sigma_now == 0.0:
            lv_vals.append(0.0)
        elif sigma_ref == 0.0 or sigma_now == 0.0:
            lv_vals.append(1.0)
        else:
            lv_vals.append(min(abs(math.log(sigma_now ** 2 / sigma_ref ** 2)), 1.0))
    d_logvar = float(np.mean(lv_vals)) if lv_vals else 0.0

    skew_now = mean_abs_skewness(t)
    d_skew = min(abs(skew_now - ctx.ref_skew) / (1.0 + abs(ctx.ref_skew)), 1.0)

    return {"w1": d_w1, "js": d_js, "corr": d_corr, "logvar": d_logvar, "skew": d_skew}


# ---------------------------------------------------------------------------
# Context and dispatch


@dataclass
class RewardContext:
    """Frozen reference state for one episode or search, plus the shared caches.

    ``prev_r3`` is the incremental reward's running baseline; compute_reward
    advances it only for kind R5.
    """

    ref_table: Table
    ref_profile: ReferenceProfile
    ref_corr: np.ndarray
    ref_skew: float
    n0: int
    harness: EvaluationHarness | None = None
    rf_seed: int = 42
    rf_cache: dict = field(default_factory=dict)
    prev_r3: float | None = None


def make_context(ref_table: Table, harness: EvaluationHarness | None = None,
                 rf_seed: int = 42, rf_cache: dict | None = None) -> RewardContext:
    return RewardContext(
        ref_table=ref_table,
        ref_profile=observer_reset(ref_table),
        ref_corr=correlation_matrix(ref_table),
        ref_skew=mean_abs_skewness(ref_table),
        n0=ref_table.n_rows,
        harness=harness,
        rf_seed=rf_seed,
        rf_cache=rf_cache if rf_cache is not None else {},
    )


def _retention(t: Table, ctx: RewardContext) -> float:
    return t.n_rows / ctx.n0


def r3_value(t: Table, ctx: RewardContext) -> float:
    w_acc, w_ret, w_q, lam = R3_WEIGHTS
    acc = rf_cv_accuracy(t, ctx.rf_seed, ctx.rf_cache)
    return clip_reward(
        w_acc * acc + w_ret * _retention(t, ctx) + w_q * quality_score(t)
        - lam * wasserstein1_normalized(t, ctx.ref_profile))


def r6_value(t: Table, ctx: RewardContext) -> float:
    comps = distortion_components(t, ctx)
    penalty = sum(w * comps[k] for w, k in
                  zip(R6_WEIGHTS, ("w1", "js", "corr", "logvar", "skew")))
    return clip_reward(1.0 - penalty)


def compute_reward(kind: str, t: Table, ctx: RewardContext) -> float:
    """Score `t` under `kind` against the context reference; result in [-1, 1].

    Evaluator failures propagate as errors, never as silent zeros.
    """
    kind = canonical_kind(kind)
    if t.n_rows == 0:
        return -1.0
    if kind == "R1":
        miss = missing_rate(t)
        return clip_reward((1.0 - miss) * math.sqrt(_retention(t, ctx)))
    if kind == "R2":
        return clip_reward(rf_cv_accuracy(t, ctx.rf_seed, ctx.rf_cache))
    if kind == "R3":
        return r3_value(t, ctx)
    if kind == "R4":
        w_acc, w_ret, w_q, lam = R4_WEIGHTS
        acc = rf_cv_accuracy(t, ctx.rf_seed, ctx.rf_cache)
        return clip_reward(
            w_acc * acc + w_ret * _retention(t, ctx) + w_q * quality_score(t)
            - lam * wasserstein1_normalized(t, ctx.ref_profile))
    if kind == "R5":
        if ctx.prev_r3 is None:
            ctx.prev_r3 = r3_value(ctx.ref_table, ctx)
        now = r3_value(t, ctx)
        reward = clip_reward(R5_SCALE * (now - ctx.prev_r3))
        ctx.prev_r3 = now
        return reward
    if kind == "R6":
        return r6_value(t, ctx)
    if kind == "R6B":
        acc = rf_cv_accuracy(t, ctx.rf_seed, ctx.rf_cache)
        return clip_reward(0.5 * acc + 0.5 * r6_value(t, ctx))
    if kind == "R7":
        if ctx.harness is None:
            raise RewardError("tfmaware reward needs an evaluation harness")
        w_acc, w_ret, w_q, lam = R7_WEIGHTS
        acc = ctx.harness.reward_eval(t).accuracy
        return clip_reward(
            w_acc * acc + w_ret * _retention(t, ctx) ** 2 + w_q * quality_score(t)
            - lam * wasserstein1_normalized(t, ctx.ref_profile))
    raise InputError(f"unknown reward kind {kind!r}")
