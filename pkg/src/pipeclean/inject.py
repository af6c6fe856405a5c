"""Deterministic synthetic corruption: MCAR/MAR missingness, outliers, duplicates.

All injectors take (table, rate, seed) and are exact-count: round(rate x eligible)
cells or rows are corrupted, removing binomial noise from single-seed runs.
The label column is never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .table import Column, Table

INJECTION_KINDS = ("mcar", "mar", "out", "dup")


@dataclass(frozen=True)
class ErrorProfile:
    kind: str
    rate: float
    seed: int = 42
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INJECTION_KINDS:
            raise InputError(f"unknown injection kind {self.kind!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise InputError(f"rate must be in [0,1], got {self.rate}")

    def artifact_stem(self, name: str) -> str:
        return f"{name}_{self.kind}_p{int(round(self.rate * 100))}"


def inject(t: Table, profile: ErrorProfile) -> Table:
    fn = {
        "mcar": inject_mcar,
        "mar": inject_mar,
        "out": lambda tt, r, s: inject_outliers(
            tt, r, s, magnitude=tuple(profile.params.get("magnitude", (5.0, 10.0)))),
        "dup": inject_duplicates,
    }[profile.kind]
    return fn(t, profile.rate, profile.seed)


def _eligible_cells(t: Table):
    """(col_index, row_index) pairs of currently-present non-label cells."""
    pairs = []
    for j, c in enumerate(t.columns):
        if c.name == t.label:
            continue
        for i in np.nonzero(~c.mask)[0]:
            pairs.append((j, int(i)))
    return pairs


def _mask_cells(t: Table, cells, log_entry: str, warning: str | None = None) -> Table:
    by_col = {}
    for j, i in cells:
        by_col.setdefault(j, []).append(i)
    cols = []
    for j, c in enumerate(t.columns):
        if j not in by_col:
            cols.append(c)
            continue
        mask = c.mask.copy()
        vals = c.values.copy()
        rows = np.asarray(by_col[j], dtype=np.int64)
        mask[rows] = True
        if c.kind == "numeric":
            vals[rows] = np.nan
        else:
            vals[rows] = ""
        cols.append(Column(c.name, c.kind, vals, mask))
    return t.with_columns(cols, log_entry, warning)


def inject_mcar(t: Table, rate: float, seed: int) -> Table:
    """Mask round(rate x eligible) uniformly-chosen present feature cells."""
    if not t.feature_columns():
        raise InputError("inject_mcar needs at least one non-label column")
    if rate == 0:
        return t
    eligible = _eligible_cells(t)
    k = int(round(rate * len(eligible)))
    if not eligible:
        return t.with_columns(t.columns, warning="mcar: no eligible cells")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(eligible), size=k, replace=False)
    cells = [eligible[i] for i in sorted(chosen.tolist())]
    return _mask_cells(t, cells, f"inject_mcar(rate={rate},seed={seed})")


def inject_mar(t: Table, rate: float, seed: int) -> Table:
    """Missing-at-random: cells in non-pivot columns are masked only in rows whose
    pivot value exceeds the pivot median, so missingness depends on observed data.

    The target count is round(rate x all present feature cells); if above-median
    rows cannot absorb it the maximum achievable is masked with a warning.
    """
    feats = t.feature_columns()
    if len(feats) < 2:
        raise InputError("inject_mar needs at least two non-label columns")
    if rate == 0:
        return t
    pivot = next((c for c in feats if c.kind == "numeric" and (~c.mask).sum() >= 1), None)
    if pivot is None:
        out = inject_mcar(t, rate, seed)
        return out.with_columns(out.columns, warning="mar: no numeric pivot, fell back to mcar")
    med = float(np.median(pivot.non_missing()))
    above = (~pivot.mask) & (pivot.values > med) if pivot.kind == "numeric" else None
    eligible_total = _eligible_cells(t)
    target = int(round(rate * len(eligible_total)))
    candidates = [
        (j, i) for (j, i) in eligible_total
        if t.columns[j].name != pivot.name and above[i]
    ]
    warning = None
    k = target
    if target > len(candidates):
        k = len(candidates)
        warning = f"mar: capped at {k} of {target} requested cells"
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(candidates), size=k, replace=False) if candidates else []
    cells = [candidates[i] for i in sorted(np.asarray(chosen).tolist())]
    return _mask_cells(t, cells, f"inject_mar(rate={rate},seed={seed},pivot={pivot.name})", warning)


def inject_outliers(t: Table, rate: float, seed: int,
                    magnitude=(5.0, 10.0)) -> Table:
    """Replace one numeric cell in round(rate x n_rows) rows by mean +/- u*sigma,
    u drawn uniformly from `magnitude`, sign random; row count unchanged."""
    if rate == 0:
        return t
    stats = {}
    for j, c in enumerate(t.columns):
        if c.name == t.label or c.kind != "numeric":
            continue
        obs = c.non_missing()
        if len(obs) >= 3 and float(np.std(obs)) > 0:
            stats[j] = (float(np.mean(obs)), float(np.std(obs)))
    if not stats:
        return t.with_columns(t.columns, warning="outliers: no qualifying numeric column")
    rng = np.random.default_rng(seed)
    k = int(round(rate * t.n_rows))
    rows = sorted(rng.choice(t.n_rows, size=min(k, t.n_rows), replace=False).tolist())
    new_vals = {j: t.columns[j].values.copy() for j in stats}
    new_mask = {j: t.columns[j].mask.copy() for j in stats}
    for i in rows:
        present = [j for j in stats if not t.columns[j].mask[i]]
        pool = present if present else list(stats)
        j = pool[int(rng.integers(len(pool)))]
        mu, sigma = stats[j]
        u = float(rng.uniform(magnitude[0], magnitude[1]))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        new_vals[j][i] = mu + sign * u * sigma
        new_mask[j][i] = False
    cols = []
    for j, c in enumerate(t.columns):
        if j in new_vals:
            cols.append(Column(c.name, c.kind, new_vals[j], new_mask[j]))
        else:
            cols.append(c)
    return t.with_columns(cols, f"inject_outliers(rate={rate},seed={seed})")


def inject_duplicates(t: Table, rate: float, seed: int) -> Table:
    """Append round(rate x n_rows) exact row copies sampled with replacement."""
    if t.n_rows < 1:
        raise InputError("inject_duplicates needs at least one row")
    if rate == 0:
        return t
    rng = np.random.default_rng(seed)
    k = int(round(rate * t.n_rows))
    picks = rng.integers(0, t.n_rows, size=k)
    idx = np.concatenate([np.arange(t.n_rows, dtype=np.int64), picks.astype(np.int64)])
    return t.take_rows(idx, f"inject_duplicates(rate={rate},seed={seed})")
