"""Synthetic desk-scale classification tables for tests and experiment demos."""

from __future__ import annotations

import numpy as np

from .table import Provenance, Table, categorical_column, numeric_column


def make_blobs_table(n_rows: int = 200, n_features: int = 4, n_classes: int = 2,
                     separation: float = 3.0, skew: float = 0.0,
                     n_categorical: int = 0, seed: int = 42,
                     label: str = "label") -> Table:
    """Gaussian class blobs with optional exponential skew and categorical noise
    columns. Separable for separation >= 3; deterministic per seed."""
    rng = np.random.default_rng(seed)
    per = [n_rows // n_classes] * n_classes
    for i in range(n_rows - sum(per)):
        per[i] += 1
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_features)) * separation
    rows = []
    labels = []
    for cls, count in enumerate(per):
        pts = centers[cls] + rng.normal(0.0, 1.0, size=(count, n_features))
        if skew > 0:
            pts = pts + rng.exponential(skew, size=pts.shape)
        rows.append(pts)
        labels.extend([f"c{cls}"] * count)
    X = np.vstack(rows)
    order = rng.permutation(n_rows)
    X = X[order]
    labels = [labels[i] for i in order]
    cols = [numeric_column(f"x{j}", X[:, j]) for j in range(n_features)]
    for j in range(n_categorical):
        values = rng.choice(["a", "b", "c"], size=n_rows)
        cols.append(categorical_column(f"cat{j}", values))
    cols.append(categorical_column(label, labels))
    return Table(tuple(cols), label=label,
                 provenance=Provenance(source=f"synthetic(seed={seed})"))
