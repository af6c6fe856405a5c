"""Parameterized cleaning operators, pipelines, exhaustive enumeration, and the
stratified pipeline subsampler.

An action is (family, operator, sub-parameters). A pipeline is an ordered
sequence of at most three actions with pairwise-distinct families; the empty
pipeline is the explicit no-op. Operators never read or write the label column.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import InputError
from .table import Column, Table, row_fingerprints

IMPUTER, OUTLIER, SCALER, DEDUP = "imputer", "outlier", "scaler", "dedup"
FAMILIES = (IMPUTER, OUTLIER, SCALER, DEDUP)


@dataclass(frozen=True)
class Action:
    family: str
    operator: str
    params: tuple = ()  # sorted (key, value) pairs

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown family {self.family!r}")
        p = dict(self.params)
        if self.family == IMPUTER:
            if self.operator not in ("mean", "median", "knn"):
                raise InputError(f"unknown imputer {self.operator!r}")
            if self.operator == "knn":
                k = p.get("k", 5)
                if not (isinstance(k, int) and 1 <= k <= 20):
                    raise InputError(f"knn k must be an integer in [1,20], got {k}")
        elif self.family == OUTLIER:
            if self.operator not in ("iqr", "zscore"):
                raise InputError(f"unknown outlier method {self.operator!r}")
            thr = p.get("threshold")
            if thr is None or not 0.5 <= thr <= 5.0:
                raise InputError(f"outlier threshold must be in [0.5,5.0], got {thr}")
        elif self.family == SCALER:
            if self.operator not in ("minmax", "zscore", "quantile"):
                raise InputError(f"unknown scaler {self.operator!r}")
            if self.operator == "quantile" and p.get("output", "uniform") not in ("uniform", "normal"):
                raise InputError("quantile output must be 'uniform' or 'normal'")
        elif self.family == DEDUP and self.operator != "exact":
            raise InputError(f"unknown dedup operator {self.operator!r}")

    def canonical(self) -> str:
        p = dict(self.params)
        if self.family == IMPUTER:
            inner = self.operator if self.operator != "knn" else f"knn,k={p.get('k', 5)}"
            return f"impute({inner})"
        if self.family == OUTLIER:
            return f"outlier({self.operator},t={p['threshold']})"
        if self.family == SCALER:
            if self.operator == "quantile":
                return f"scale(quantile,out={p.get('output', 'uniform')})"
            return f"scale({self.operator})"
        return "dedup()"


def impute(strategy: str, k: int = 5) -> Action:
    params = (("k", k),) if strategy == "knn" else ()
    return Action(IMPUTER, strategy, params)


def remove_outliers(method: str, threshold: float) -> Action:
    return Action(OUTLIER, method, (("threshold", float(threshold)),))


def scale(method: str, output: str = "uniform") -> Action:
    params = (("output", output),) if method == "quantile" else ()
    return Action(SCALER, method, params)


def dedup() -> Action:
    return Action(DEDUP, "exact")


@dataclass(frozen=True)
class Pipeline:
    steps: tuple = ()

    def __post_init__(self):
        if len(self.steps) > 3:
            raise InputError("pipelines hold at most 3 actions")
        fams = [a.family for a in self.steps]
        if len(set(fams)) != len(fams):
            raise InputError("pipeline repeats an action family")

    def canonical(self) -> str:
        if not self.steps:
            return "no-op"
        return "->".join(a.canonical() for a in self.steps)

    def __len__(self):
        return len(self.steps)

    def to_json(self) -> list:
        return [
            {"family": a.family, "operator": a.operator, "params": dict(a.params)}
            for a in self.steps
        ]

    @staticmethod
    def from_json(data) -> "Pipeline":
        steps = tuple(
            Action(d["family"], d["operator"], tuple(sorted(d.get("params", {}).items())))
            for d in data
        )
        return Pipeline(steps)


NOOP = Pipeline()


@dataclass(frozen=True)
class ActionSuite:
    name: str
    actions: tuple

    @staticmethod
    def discrete7() -> "ActionSuite":
        return ActionSuite("discrete7", (
            impute("mean"), impute("median"), impute("knn", k=5),
            remove_outliers("iqr", 1.5), remove_outliers("zscore", 3.0),
            scale("minmax"), scale("zscore"),
        ))

    @staticmethod
    def extended9() -> "ActionSuite":
        base = ActionSuite.discrete7().actions
        return ActionSuite("extended9", base + (scale("quantile", "uniform"), dedup()))

    @staticmethod
    def param17() -> "ActionSuite":
        return ActionSuite("param17", (
            impute("mean"), impute("median"),
            impute("knn", k=3), impute("knn", k=5), impute("knn", k=7), impute("knn", k=10),
            remove_outliers("iqr", 1.0), remove_outliers("iqr", 1.5), remove_outliers("iqr", 2.0),
            remove_outliers("iqr", 2.5), remove_outliers("iqr", 3.0),
            remove_outliers("zscore", 2.0), remove_outliers("zscore", 2.5),
            remove_outliers("zscore", 3.0), remove_outliers("zscore", 3.5),
            scale("minmax"), scale("zscore"),
        ))

    @staticmethod
    def by_name(name: str) -> "ActionSuite":
        try:
            return getattr(ActionSuite, name)()
        except AttributeError:
            raise InputError(f"unknown action suite {name!r}") from None


# ---------------------------------------------------------------------------
# Operators


def _impute_stats(t: Table, strategy: str) -> Table:
    cols = []
    warnings = []
    for c in t.columns:
        if c.name == t.label or not c.mask.any():
            cols.append(c)
            continue
        obs = c.non_missing()
        if len(obs) == 0:
            warnings.append(f"impute: column {c.name!r} entirely missing, left as-is")
            cols.append(c)
            continue
        vals = c.values.copy()
        if c.kind == "numeric":
            fill = float(np.mean(obs)) if strategy == "mean" else float(np.median(obs))
            vals[c.mask] = fill
        else:
            uniq, counts = np.unique(obs, return_counts=True)
            fill = sorted(uniq[counts == counts.max()])[0]
            vals[c.mask] = fill
        cols.append(Column(c.name, c.kind, vals, np.zeros(t.n_rows, dtype=bool)))
    warning = "; ".join(warnings) if warnings else None
    return t.with_columns(cols, None, warning)


def _impute_knn(t: Table, k: int) -> Table:
    num_cols = [c for c in t.columns
                if c.name != t.label and c.kind == "numeric" and (~c.mask).any()]
    if not num_cols:
        return _impute_stats(t, "mean")
    X = np.column_stack([c.values for c in num_cols])
    M = np.column_stack([c.mask for c in num_cols])
    mu = np.array([np.mean(c.non_missing()) for c in num_cols])
    sd = np.array([np.std(c.non_missing()) for c in num_cols])
    sd[sd == 0] = 1.0
    X = np.where(M, 0.0, X)  # keep nan out of the arithmetic; masked cells are ignored
    Z = (X - mu) / sd
    complete = np.nonzero(~M.any(axis=1))[0]
    filled = X.copy()
    fallback = False
    for i in np.nonzero(M.any(axis=1))[0]:
        obs = ~M[i]
        donors = complete
        if len(donors) == 0 or not obs.any():
            filled[i, M[i]] = mu[M[i]]
            fallback = True
            continue
        diffs = Z[donors][:, obs] - Z[i, obs]
        dist = np.sqrt(np.mean(diffs * diffs, axis=1))
        order = np.argsort(dist, kind="stable")[: min(k, len(donors))]
        filled[i, M[i]] = np.mean(X[donors[order]][:, M[i]], axis=0)
    col_slot = {c.name: j for j, c in enumerate(num_cols)}
    out_cols = []
    for c in t.columns:
        if c.name in col_slot:
            j = col_slot[c.name]
            out_cols.append(Column(c.name, "numeric", filled[:, j].copy(),
                                   np.zeros(t.n_rows, dtype=bool)))
        else:
            out_cols.append(c)
    out = t.with_columns(
        out_cols, None,
        "knn impute: no complete row, used column means" if fallback else None)
    # Categorical gaps still filled by mode, matching the statistic imputers.
    if any(c.mask.any() for c in out.columns if c.name != out.label):
        out = _impute_stats(out, "mean")
    return out


def _outlier_keep_mask(t: Table, method: str, threshold: float) -> np.ndarray:
    keep = np.ones(t.n_rows, dtype=bool)
    for c in t.numeric_feature_columns():
        obs = c.non_missing()
        if len(obs) < 3:
            continue
        vals = np.where(c.mask, 0.0, c.values)  # nan-free; masked cells never flag
        if method == "iqr":
            q1, q3 = np.quantile(obs, [0.25, 0.75])
            iqr = q3 - q1
            lo, hi = q1 - threshold * iqr, q3 + threshold * iqr
            bad = (~c.mask) & ((vals < lo) | (vals > hi))
        else:
            mu, sigma = float(np.mean(obs)), float(np.std(obs))
            if sigma == 0:
                continue
            bad = (~c.mask) & (np.abs(vals - mu) / sigma > threshold)
        keep &= ~bad
    return keep


def _apply_scaler(t: Table, method: str, output: str) -> Table:
    cols = []
    for c in t.columns:
        if c.name == t.label or c.kind != "numeric":
            cols.append(c)
            continue
        obs = c.non_missing()
        vals = c.values.copy()
        if len(obs) == 0:
            cols.append(c)
            continue
        present = ~c.mask
        if method == "minmax":
            lo, hi = float(np.min(obs)), float(np.max(obs))
            vals[present] = 0.0 if hi == lo else (vals[present] - lo) / (hi - lo)
        elif method == "zscore":
            mu, sigma = float(np.mean(obs)), float(np.std(obs))
            vals[present] = 0.0 if sigma == 0 else (vals[present] - mu) / sigma
        else:  # quantile: midpoint empirical ranks keep outputs finite
            ranks = rankdata(vals[present], method="average")
            u = (ranks - 0.5) / len(obs)
            vals[present] = u if output == "uniform" else ndtri(u)
        cols.append(Column(c.name, "numeric", vals, c.mask.copy()))
    return t.with_columns(cols)


def _apply_dedup(t: Table) -> Table:
    seen = set()
    keep = []
    for i, fp in enumerate(row_fingerprints(t)):
        if fp not in seen:
            seen.add(fp)
            keep.append(i)
    if len(keep) == t.n_rows:
        return t.with_columns(t.columns)
    return t.take_rows(np.asarray(keep, dtype=np.int64))


def apply_action(t: Table, a: Action) -> Table:
    p = dict(a.params)
    if a.family == IMPUTER:
        out = _impute_knn(t, p.get("k", 5)) if a.operator == "knn" else _impute_stats(t, a.operator)
    elif a.family == OUTLIER:
        keep = _outlier_keep_mask(t, a.operator, p["threshold"])
        out = t if keep.all() else t.take_rows(np.nonzero(keep)[0])
    elif a.family == SCALER:
        out = _apply_scaler(t, a.operator, p.get("output", "uniform"))
    else:
        out = _apply_dedup(t)
    return out.with_columns(out.columns, a.canonical())


def apply_pipeline(t: Table, p: Pipeline) -> Table:
    for a in p.steps:
        t = apply_action(t, a)
    return t


# ---------------------------------------------------------------------------
# Enumeration and subsampling


def enumerate_pipelines(suite: ActionSuite, max_len: int = 3) -> list:
    """All ordered family-distinct sequences of length 0..max_len, in canonical
    order: by length, then lexicographic action index (permutations() already
    emits index tuples lexicographically per length)."""
    out = [NOOP]
    for length in range(1, max_len + 1):
        for combo in itertools.permutations(suite.actions, length):
            fams = [a.family for a in combo]
            if len(set(fams)) != length:
                continue
            out.append(Pipeline(combo))
    return out


def expected_pipeline_count(family_sizes, max_len: int = 3) -> int:
    """Closed-form count of family-distinct ordered sequences up to max_len."""
    total = 1
    sizes = list(family_sizes)
    for length in range(1, max_len + 1):
        for combo in itertools.combinations(sizes, length):
            total += math.factorial(length) * math.prod(combo)
    return total


def subsample_pipelines(pool, budget: int, seed: int) -> list:
    """Stratified pipeline subsample: always keeps the no-op and every single-step
    pipeline, then fills the remainder from the 2-step and 3-step tiers
    proportionally to tier size (largest-remainder rounding), sampling uniformly
    without replacement inside each tier."""
    singles = [p for p in pool if len(p) == 1]
    tier2 = [p for p in pool if len(p) == 2]
    tier3 = [p for p in pool if len(p) == 3]
    mandatory = [p for p in pool if len(p) == 0] + singles
    if budget < len(mandatory):
        raise InputError(
            f"budget {budget} below mandatory pipelines; minimum feasible is {len(mandatory)}")
    rem = budget - len(mandatory)
    sizes = [len(tier2), len(tier3)]
    total = sum(sizes)
    if total == 0 or rem == 0:
        counts = [0, 0]
        rem = 0
    else:
        exact = [rem * s / total for s in sizes]
        counts = [int(math.floor(e)) for e in exact]
        counts = [min(c, s) for c, s in zip(counts, sizes)]
        leftover = rem - sum(counts)
        order = sorted(range(2), key=lambda i: (-(exact[i] - math.floor(exact[i])), i))
        for i in itertools.cycle(order):
            if leftover == 0:
                break
            if counts[i] < sizes[i]:
                counts[i] += 1
                leftover -= 1
            elif all(counts[j] >= sizes[j] for j in range(2)):
                raise InputError(f"budget {budget} exceeds pool size {len(pool)}")
    rng = np.random.default_rng(seed)
    out = list(mandatory)
    for tier, n_pick in zip([tier2, tier3], counts):
        if n_pick:
            chosen = sorted(rng.choice(len(tier), size=n_pick, replace=False).tolist())
            out.extend(tier[i] for i in chosen)
    return out
