#!/usr/bin/env python3
"""Generate the desk-scale synthetic dataset corpus: two base tables plus every
injected artifact the c1..c6 experiment configs reference.

Usage: python scripts/make_synthetic.py [--out datasets] [--seed 42]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pipeclean.inject import ErrorProfile, inject
from pipeclean.synth import make_blobs_table
from pipeclean.table import save_table

BASES = {
    "synthA": dict(n_rows=150, n_features=4, seed=21, skew=1.0, separation=4.0),
    "synthB": dict(n_rows=180, n_features=5, seed=22, separation=4.0),
    "synthC": dict(n_rows=120, n_features=3, seed=23, skew=2.0, separation=3.5),
}

PROFILES = ([("mcar", r) for r in (0, 5, 10, 15, 20, 30)]
            + [("mar", 15), ("out", 10), ("dup", 10)])


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="datasets")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name, spec in BASES.items():
        base = make_blobs_table(**spec)
        save_table(base, os.path.join(args.out, f"{name}.csv"))
        for kind, rate in PROFILES:
            profile = ErrorProfile(kind=kind, rate=rate / 100, seed=args.seed)
            artifact = inject(base, profile)
            path = os.path.join(args.out, profile.artifact_stem(name) + ".csv")
            save_table(artifact, path)
            print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
