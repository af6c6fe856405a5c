#!/usr/bin/env python3
"""Fetch the ten OpenML benchmark classification datasets and store them as
plain CSVs ready for the `pipeclean inject` step.

Network access is deliberately not a library dependency; this script is the
one documented place that talks to OpenML (through scikit-learn's fetcher).

Usage: python scripts/fetch_openml_datasets.py [--out datasets] [--only adult]
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

# (short name, OpenML data id, label column)
DATASETS = [
    ("hepatitis", 55, "Class"),
    ("heart-statlog", 53, "class"),
    ("ionosphere", 59, "class"),
    ("blood-transfusion", 1464, "Class"),
    ("diabetes", 37, "class"),
    ("credit-g", 31, "class"),
    ("kr-vs-kp", 3, "class"),
    ("phoneme", 1489, "Class"),
    ("adult", 1590, "class"),
    ("bank-marketing", 1461, "Class"),
]

# adult and bank-marketing get subsampled to 10k rows for policy training runs
SUBSAMPLE_10K = {"adult", "bank-marketing"}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="datasets")
    parser.add_argument("--only", default=None, help="fetch a single dataset by name")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    from sklearn.datasets import fetch_openml

    from pipeclean.table import load_table, save_table, subsample_stratified

    os.makedirs(args.out, exist_ok=True)
    for name, data_id, label in DATASETS:
        if args.only and args.only != name:
            continue
        print(f"fetching {name} (openml id {data_id})...")
        bunch = fetch_openml(data_id=data_id, as_frame=True, parser="auto")
        frame = bunch.frame
        raw_path = os.path.join(args.out, f"{name}.csv")
        frame.to_csv(raw_path, index=False)
        table = load_table(raw_path, label=label)
        if name in SUBSAMPLE_10K and table.n_rows > 10_000:
            table = subsample_stratified(table, 10_000, args.seed)
        save_table(table, raw_path)
        print(f"  wrote {raw_path} ({table.n_rows} rows, label={label!r})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
