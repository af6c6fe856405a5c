#!/usr/bin/env python3
"""Run the full c1..c6 study suite on the synthetic corpus end to end.

Generates artifacts if missing, then executes every experiment with desk-scale
settings into reports/<id>/. Expect a few minutes of wall time.

Usage: python scripts/run_experiments.py [--datasets datasets] [--reports reports]
"""

import argparse
import json
import os
import subprocess
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pipeclean.experiments import run_experiment


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--datasets", default="datasets")
    parser.add_argument("--reports", default="reports")
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()

    if not os.path.exists(os.path.join(args.datasets, "synthA_mcar_p15.csv")):
        subprocess.run([sys.executable,
                        os.path.join(os.path.dirname(__file__), "make_synthetic.py"),
                        "--out", args.datasets], check=True)

    two = [{"name": "synthA", "label": "label"}, {"name": "synthB", "label": "label"}]
    three = two + [{"name": "synthC", "label": "label"}]
    common = {"artifact_dir": args.datasets, "seed": args.seed,
              "evaluator": "reference"}
    runs = {
        "c1": {"datasets": two},
        "c2": {"datasets": three, "np": 20,
               "options": {"rl_steps": 600, "rl_finetune_steps": 120}},
        "c3": {"datasets": two, "np": 20},
        "c4": {"datasets": two, "np": 20},
        "c5": {"datasets": three},
        "c6": {"datasets": three,
               "options": {"source": "synthA", "pretrain_steps": 1800,
                           "scratch_steps": 1200, "finetune_steps": 1200,
                           "reward": "R3"}},
    }
    for exp_id, extra in runs.items():
        cfg = dict(common)
        cfg.update(extra)
        cfg["experiment"] = exp_id
        cfg["out"] = os.path.join(args.reports, exp_id)
        print(f"== running {exp_id} ...")
        summary = run_experiment(cfg)
        keep = {k: v for k, v in summary.items() if k not in ("config",)}
        print(json.dumps(keep, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
