"""Columnar dataset model: typed columns with missing masks, deterministic IO,
stratified splitting and subsampling, and row/table fingerprints.

Tables are immutable: every operation returns a new ``Table``. Numeric columns
store float64 values with ``nan`` at masked positions; categorical columns
store strings. The mask is authoritative for missingness.
"""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InputError

MISSING_MARKERS = frozenset({"", "NA", "NaN", "?"})
NUMERIC_INFERENCE_THRESHOLD = 0.95

ARTIFACT_NAME_RE = re.compile(r"^(?P<name>.+)_(?P<type>mcar|mar|out|dup)_p(?P<rate>\d+)$")


@dataclass(frozen=True)
class Column:
    """One named column: float64 values or string codes, plus a missing mask."""

    name: str
    kind: str  # "numeric" | "categorical"
    values: np.ndarray
    mask: np.ndarray  # True where missing

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if len(self.values) != len(self.mask):
            raise ValueError("values and mask length mismatch")
        self.values.flags.writeable = False
        self.mask.flags.writeable = False

    def non_missing(self) -> np.ndarray:
        return self.values[~self.mask]

    @property
    def n_missing(self) -> int:
        return int(self.mask.sum())


def numeric_column(name: str, values, mask=None) -> Column:
    vals = np.asarray(values, dtype=np.float64).copy()
    if mask is None:
        mask = np.isnan(vals)
    else:
        mask = np.asarray(mask, dtype=bool).copy()
    vals[mask] = np.nan
    return Column(name, "numeric", vals, mask)


def categorical_column(name: str, values, mask=None) -> Column:
    vals = np.asarray([str(v) for v in values], dtype=object)
    if mask is None:
        mask = np.zeros(len(vals), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool).copy()
    vals[mask] = ""
    return Column(name, "categorical", vals, mask)


@dataclass(frozen=True)
class Provenance:
    """Source path plus an append-only log of applied transforms and warnings."""

    source: str = ""
    log: tuple = ()
    warnings: tuple = ()

    def with_log(self, entry: str) -> "Provenance":
        return replace(self, log=self.log + (entry,))

    def with_warning(self, entry: str) -> "Provenance":
        return replace(self, warnings=self.warnings + (entry,))


@dataclass(frozen=True)
class Table:
    """An immutable columnar dataset with an optional designated label column."""

    columns: tuple
    label: str | None = None
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        if not self.columns:
            raise InputError("table has zero columns")
        n = len(self.columns[0].values)
        for c in self.columns:
            if len(c.values) != n:
                raise InputError(f"column {c.name!r} length {len(c.values)} != {n}")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise InputError("duplicate column names")
        if self.label is not None and self.label not in names:
            raise InputError(f"label column {self.label!r} not present")

    @property
    def n_rows(self) -> int:
        return len(self.columns[0].values)

    @property
    def n_cols(self) -> int:
        return len(self.columns)

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def feature_columns(self) -> tuple:
        return tuple(c for c in self.columns if c.name != self.label)

    def numeric_feature_columns(self) -> tuple:
        return tuple(c for c in self.feature_columns() if c.kind == "numeric")

    def label_column(self) -> Column:
        if self.label is None:
            raise InputError("table has no label column")
        return self.column(self.label)

    def with_columns(self, columns, log_entry: str | None = None,
                     warning: str | None = None) -> "Table":
        prov = self.provenance
        if log_entry:
            prov = prov.with_log(log_entry)
        if warning:
            prov = prov.with_warning(warning)
        return Table(tuple(columns), self.label, prov)

    def take_rows(self, indices, log_entry: str | None = None) -> "Table":
        idx = np.asarray(indices, dtype=np.int64)
        cols = tuple(
            Column(c.name, c.kind, c.values[idx].copy(), c.mask[idx].copy())
            for c in self.columns
        )
        return self.with_columns(cols, log_entry)

    def class_counts(self) -> dict:
        """Label value -> row count, keys sorted for determinism."""
        col = self.label_column()
        vals = col.values[~col.mask]
        keys = sorted(set(_label_key(v) for v in vals))
        return {k: int(sum(1 for v in vals if _label_key(v) == k)) for k in keys}

    def labels_as_codes(self) -> np.ndarray:
        """Integer class codes, assigned by sorted label value."""
        col = self.label_column()
        keys = sorted(set(_label_key(v) for v in col.values))
        lut = {k: i for i, k in enumerate(keys)}
        return np.asarray([lut[_label_key(v)] for v in col.values], dtype=np.int64)

    def feature_matrix(self) -> np.ndarray:
        """Float matrix of features: numeric as-is (nan where missing),
        categoricals label-encoded to integer codes (nan where missing)."""
        cols = []
        for c in self.feature_columns():
            if c.kind == "numeric":
                cols.append(c.values.astype(np.float64))
            else:
                keys = sorted(set(c.values[~c.mask]))
                lut = {k: float(i) for i, k in enumerate(keys)}
                enc = np.array([lut.get(v, np.nan) for v in c.values], dtype=np.float64)
                enc[c.mask] = np.nan
                cols.append(enc)
        return np.column_stack(cols) if cols else np.empty((self.n_rows, 0))


def _label_key(v) -> str:
    if isinstance(v, float):
        if float(v).is_integer():
            return str(int(v))
        return canonical_number(v)
    return str(v)


def canonical_number(v: float) -> str:
    """Fixed 12-significant-digit decimal rendering; defines numeric cell equality."""
    return format(float(v) + 0.0, ".12g")


def row_fingerprint(t: Table, row: int) -> str:
    """Hash of one row; equal under per-cell value equality (missing == missing).

    A 128-bit digest collision would make two distinct rows count as
    duplicates; that event is accepted rather than guarded against.
    """
    if row >= t.n_rows:
        raise InputError(f"row {row} out of range for {t.n_rows}-row table")
    h = hashlib.blake2b(digest_size=16)
    for c in t.columns:
        if c.mask[row]:
            h.update(b"\x00M|")
        elif c.kind == "numeric":
            h.update(canonical_number(c.values[row]).encode())
            h.update(b"|")
        else:
            s = str(c.values[row])
            h.update(f"{len(s)}:{s}|".encode())
    return h.hexdigest()


def row_fingerprints(t: Table) -> list:
    return [row_fingerprint(t, i) for i in range(t.n_rows)]


def table_fingerprint(t: Table) -> str:
    """Content fingerprint over values + masks + schema; cache key for evaluations."""
    h = hashlib.blake2b(digest_size=16)
    h.update(f"label={t.label}|rows={t.n_rows}".encode())
    for c in t.columns:
        h.update(f"|{c.name}:{c.kind}:".encode())
        h.update(c.mask.tobytes())
        if c.kind == "numeric":
            vals = c.values.copy()
            vals[c.mask] = 0.0  # nan payload bits must not leak into the key
            h.update((vals + 0.0).tobytes())
        else:
            for v, m in zip(c.values, c.mask):
                if not m:
                    h.update(f"{len(v)}:{v};".encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Ingestion


def _infer_column(name: str, tokens: list):
    """Type a raw CSV column: numeric if >=95% of non-missing tokens parse."""
    mask = np.array([tok in MISSING_MARKERS for tok in tokens], dtype=bool)
    parsed = []
    parse_ok = 0
    non_missing = 0
    for tok, m in zip(tokens, mask):
        if m:
            parsed.append(np.nan)
            continue
        non_missing += 1
        try:
            parsed.append(float(tok))
            parse_ok += 1
        except ValueError:
            parsed.append(np.nan)
    warning = None
    if non_missing == 0:
        # All-missing column: numeric by convention.
        return numeric_column(name, parsed, mask), None
    if parse_ok / non_missing >= NUMERIC_INFERENCE_THRESHOLD:
        stray = non_missing - parse_ok
        if stray:
            mask = mask | np.isnan(np.asarray(parsed))
            warning = f"column {name!r}: {stray} unparseable token(s) treated as missing"
        return numeric_column(name, parsed, mask), warning
    if parse_ok > 0:
        warning = f"column {name!r}: mixed types below threshold, kept categorical"
    return categorical_column(name, tokens, mask), warning


def load_table(path, fmt: str | None = None, label: str | None = None) -> Table:
    """Load a CSV or Parquet file into a Table.

    Missing markers {empty, "NA", "NaN", "?"} become mask bits. Rows with a
    missing label are dropped and counted in the provenance warnings.
    """
    path = str(path)
    if fmt is None:
        fmt = "parquet" if path.endswith(".parquet") else "csv"
    if fmt == "csv":
        t = _load_csv(path, label)
    elif fmt == "parquet":
        t = _load_parquet(path, label)
    else:
        raise InputError(f"unknown format {fmt!r}")
    return _drop_missing_labels(t)


def _load_csv(path: str, label: str | None) -> Table:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    if not rows:
        raise InputError(f"{path}: empty file")
    header, data = rows[0], rows[1:]
    if not header:
        raise InputError(f"{path}: zero columns")
    if not data:
        raise InputError(f"{path}: zero data rows")
    width = len(header)
    for i, r in enumerate(data):
        if len(r) != width:
            raise InputError(f"{path}: row {i + 2} has {len(r)} cells, expected {width}")
    cols = []
    warnings = []
    for j, name in enumerate(header):
        col, warn = _infer_column(name, [r[j] for r in data])
        cols.append(col)
        if warn:
            warnings.append(warn)
    prov = Provenance(source=path, warnings=tuple(warnings))
    return Table(tuple(cols), label=label, provenance=prov)


def _load_parquet(path: str, label: str | None) -> Table:
    import pyarrow.parquet as pq

    try:
        pa_table = pq.read_table(path)
    except Exception as e:
        raise InputError(f"cannot read {path}: {e}") from e
    if pa_table.num_rows == 0 or pa_table.num_columns == 0:
        raise InputError(f"{path}: empty table")
    import pyarrow as pa

    cols = []
    for name in pa_table.column_names:
        arr = pa_table.column(name).combine_chunks()
        mask = np.asarray(arr.is_null())
        if pa.types.is_floating(arr.type) or pa.types.is_integer(arr.type):
            vals = np.asarray(arr.fill_null(float("nan")), dtype=np.float64)
            cols.append(numeric_column(name, vals, mask | np.isnan(vals)))
        else:
            vals = ["" if v is None else str(v) for v in arr.to_pylist()]
            cols.append(categorical_column(name, vals, mask))
    meta = pa_table.schema.metadata or {}
    if label is None and b"pipeclean.label" in meta:
        label = meta[b"pipeclean.label"].decode()
    return Table(tuple(cols), label=label, provenance=Provenance(source=path))


def _drop_missing_labels(t: Table) -> Table:
    if t.label is None:
        return t
    lab = t.label_column()
    if not lab.mask.any():
        return t
    keep = np.nonzero(~lab.mask)[0]
    dropped = t.n_rows - len(keep)
    if len(keep) == 0:
        raise InputError("all rows have missing labels")
    out = t.take_rows(keep)
    return out.with_columns(out.columns, warning=f"dropped {dropped} row(s) with missing label")


def save_table(t: Table, path, fmt: str | None = None) -> None:
    path = str(path)
    if fmt is None:
        fmt = "parquet" if path.endswith(".parquet") else "csv"
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([c.name for c in t.columns])
            for i in range(t.n_rows):
                row = []
                for c in t.columns:
                    if c.mask[i]:
                        row.append("")
                    elif c.kind == "numeric":
                        row.append(repr(float(c.values[i])))
                    else:
                        row.append(str(c.values[i]))
                w.writerow(row)
    elif fmt == "parquet":
        import pyarrow as pa
        import pyarrow.parquet as pq

        arrays, names = [], []
        for c in t.columns:
            names.append(c.name)
            if c.kind == "numeric":
                arrays.append(pa.array(c.values, type=pa.float64(), mask=c.mask))
            else:
                arrays.append(pa.array(
                    [None if m else v for v, m in zip(c.values, c.mask)],
                    type=pa.string()))
        meta = {b"pipeclean.label": t.label.encode()} if t.label else None
        pq.write_table(pa.table(dict(zip(names, arrays))).replace_schema_metadata(meta), path)
    else:
        raise InputError(f"unknown format {fmt!r}")


def parse_artifact_name(stem: str):
    """Parse `<name>_<type>_p<rate>` artifact stems; returns (name, type, rate%) or None."""
    m = ARTIFACT_NAME_RE.match(stem)
    if not m:
        return None
    return m.group("name"), m.group("type"), int(m.group("rate"))


# ---------------------------------------------------------------------------
# Splitting and subsampling


@dataclass(frozen=True)
class SplitPair:
    train: Table
    test: Table
    seed: int
    fraction: float


def _class_indices(t: Table) -> dict:
    """Label key -> row indices (original order), keys sorted."""
    col = t.label_column()
    keys = {}
    for i, v in enumerate(col.values):
        keys.setdefault(_label_key(v), []).append(i)
    return {k: np.asarray(keys[k], dtype=np.int64) for k in sorted(keys)}


def stratified_split(t: Table, fraction: float, seed: int) -> SplitPair:
    """Deterministic per-class holdout: test gets round(fraction * class count)
    rows of each class; single-row classes are forced into train."""
    if t.label is None:
        raise InputError("stratified_split requires a label column")
    if not 0 < fraction < 1:
        raise InputError(f"fraction must be in (0,1), got {fraction}")
    rng = np.random.default_rng(seed)
    by_class = _class_indices(t)
    test_idx = []
    warnings = []
    plan = []
    for key, idx in by_class.items():
        if len(idx) < 2:
            warnings.append(f"class {key!r} has 1 row; forced into train")
            plan.append((key, idx, 0))
            continue
        n_test = int(round(fraction * len(idx)))
        n_test = min(n_test, len(idx) - 1)
        plan.append((key, idx, n_test))
    if all(n == 0 for _, _, n in plan):
        # Keep the test side non-empty: take one row from the largest class.
        key, idx, _ = max(plan, key=lambda p: len(p[1]))
        plan = [(k, i, (1 if k == key else n)) for k, i, n in plan]
    for key, idx, n_test in plan:
        perm = rng.permutation(len(idx))
        test_idx.extend(idx[perm[:n_test]].tolist())
    test_idx = np.asarray(sorted(test_idx), dtype=np.int64)
    train_idx = np.asarray(sorted(set(range(t.n_rows)) - set(test_idx.tolist())), dtype=np.int64)
    train = t.take_rows(train_idx, f"split(train,fraction={fraction},seed={seed})")
    test = t.take_rows(test_idx, f"split(test,fraction={fraction},seed={seed})")
    if warnings:
        train = train.with_columns(train.columns, warning="; ".join(warnings))
    return SplitPair(train=train, test=test, seed=seed, fraction=fraction)


def subsample_stratified(t: Table, max_rows: int, seed: int) -> Table:
    """Per-class proportional subsample to at most max_rows rows (largest-remainder
    apportionment, at least one row per class); identity when already small enough."""
    if t.label is None:
        raise InputError("subsample_stratified requires a label column")
    by_class = _class_indices(t)
    if max_rows < len(by_class):
        raise InputError(f"max_rows={max_rows} below class count {len(by_class)}")
    if t.n_rows <= max_rows:
        return t
    keys = list(by_class)
    sizes = np.array([len(by_class[k]) for k in keys], dtype=np.float64)
    exact = sizes * (max_rows / t.n_rows)
    counts = np.maximum(np.floor(exact).astype(np.int64), 1)
    rem = max_rows - int(counts.sum())
    if rem < 0:  # floor+min-1 overshoot: trim largest classes
        order = np.argsort(-counts, kind="stable")
        for i in order:
            if rem == 0:
                break
            give = min(-rem, counts[i] - 1)
            counts[i] -= give
            rem += give
    else:
        frac = exact - np.floor(exact)
        order = sorted(range(len(keys)), key=lambda i: (-frac[i], i))
        for i in order[:rem]:
            counts[i] += 1
    rng = np.random.default_rng(seed)
    chosen = []
    for k, n_keep in zip(keys, counts):
        idx = by_class[k]
        perm = rng.permutation(len(idx))
        chosen.extend(idx[perm[:n_keep]].tolist())
    chosen = np.asarray(sorted(chosen), dtype=np.int64)
    return t.take_rows(chosen, f"subsample(max_rows={max_rows},seed={seed})")
