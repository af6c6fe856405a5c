"""Command-line surface.

Subcommands: inject, profile, enumerate, greedy, train, finetune,
evaluate-policy, stats, experiment. Exit codes: 0 success, 1 user error,
2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback

import numpy as np

from .actions import ActionSuite, enumerate_pipelines, subsample_pipelines
from .agent import (PolicyCheckpoint, PolicyGradientAgent, PolicySpec,
                    fine_tune, train)
from .env import CleaningEnv, EnvConfig, TrajectoryRecorder
from .errors import InputError, PipecleanError
from .evaluators import EvaluationHarness, make_evaluator
from .experiments import emit_plot_data, run_experiment, write_csv
from .inject import ErrorProfile, inject
from .observer import observe, reset as observer_reset
from .rewards import canonical_kind
from .search import SearchSession, greedy_search
from .stats import spearman, wilcoxon_signed_rank
from .table import load_table, save_table


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _add_io_args(p, label_default="label"):
    p.add_argument("--input", required=True, help="CSV or Parquet dataset")
    p.add_argument("--label", default=label_default, help="label column name")
    p.add_argument("--no-label", action="store_true",
                   help="treat every column as a feature")
    p.add_argument("--seed", type=int, default=42)


def _load_input(args):
    return load_table(args.input,
                      label=None if getattr(args, "no_label", False) else args.label)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pipeclean",
                     description="Model-aware tabular cleaning pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="write a corrupted dataset artifact")
    _add_io_args(p)
    p.add_argument("--kind", required=True, choices=["mcar", "mar", "out", "dup"])
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", default=None, help="artifact base name (default: input stem)")
    p.add_argument("--format", choices=["csv", "parquet"], default="csv")

    p = sub.add_parser("profile", help="print the 9-component quality state as JSON")
    _add_io_args(p)

    p = sub.add_parser("enumerate", help="list pipelines for an action suite")
    p.add_argument("--suite", default="discrete7",
                   choices=["discrete7", "extended9", "param17"])
    p.add_argument("--max-len", type=int, default=3)
    p.add_argument("--count-only", action="store_true")

    p = sub.add_parser("greedy", help="score candidate pipelines and pick the best")
    _add_io_args(p)
    p.add_argument("--suite", default="discrete7",
                   choices=["discrete7", "extended9", "param17"])
    p.add_argument("--reward", default="R7")
    p.add_argument("--np", type=int, default=None, dest="np_budget",
                   help="stratified subsample budget (default: exhaustive)")
    p.add_argument("--evaluator", choices=["reference", "mock", "external"],
                   default="reference")
    p.add_argument("--sidecar-cmd", default=None,
                   help="external evaluator command line")
    p.add_argument("--out", required=True)

    for name in ("train", "finetune"):
        p = sub.add_parser(name, help=f"{name} a cleaning policy")
        _add_io_args(p)
        p.add_argument("--steps", type=int, required=True)
        p.add_argument("--reward", default="R3")
        p.add_argument("--suite", default="discrete7",
                       choices=["discrete7", "extended9", "param17"])
        p.add_argument("--evaluator", choices=["reference", "mock", "external"],
                       default="reference")
        p.add_argument("--sidecar-cmd", default=None)
        p.add_argument("--out", required=True)
        if name == "finetune":
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("evaluate-policy", help="greedy rollout of a trained policy")
    _add_io_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reward", default="R3")
    p.add_argument("--suite", default="discrete7",
                   choices=["discrete7", "extended9", "param17"])
    p.add_argument("--evaluator", choices=["reference", "mock", "external"],
                   default="reference")
    p.add_argument("--sidecar-cmd", default=None)
    p.add_argument("--trajectory", default=None, help="JSON-lines trajectory log path")

    p = sub.add_parser("stats", help="run a statistical test on two CSV columns")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--test", choices=["wilcoxon", "spearman"], required=True)
    p.add_argument("--alternative", choices=["two-sided", "greater", "less"],
                   default="two-sided")

    p = sub.add_parser("experiment", help="run one of the c1..c6 studies")
    p.add_argument("id", choices=["c1", "c2", "c3", "c4", "c5", "c6"])
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=None, help="override output directory")
    p.add_argument("--seed", type=int, default=None, help="override config seed")

    p = sub.add_parser("plot-data", help="emit plot CSVs from a report bundle")
    p.add_argument("--summary", required=True, help="summary.json of a finished run")
    p.add_argument("--kind", required=True, choices=["heatmap", "sensitivity", "transfer"])
    p.add_argument("--out", required=True)

    return parser


def _cmd_inject(args) -> int:
    t = _load_input(args)
    profile = ErrorProfile(kind=args.kind, rate=args.rate, seed=args.seed)
    corrupted = inject(t, profile)
    name = args.name or os.path.splitext(os.path.basename(args.input))[0]
    os.makedirs(args.out, exist_ok=True)
    ext = ".parquet" if args.format == "parquet" else ".csv"
    path = os.path.join(args.out, profile.artifact_stem(name) + ext)
    save_table(corrupted, path, fmt=args.format)
    print(path)
    return 0


def _cmd_profile(args) -> int:
    t = _load_input(args)
    ref = observer_reset(t)
    state = observe(t, ref)
    per_column = []
    for c in t.columns:
        entry = {"name": c.name, "kind": c.kind,
                 "missing_rate": float(c.mask.mean())}
        if c.kind == "numeric" and (~c.mask).any():
            obs = c.non_missing()
            entry.update(mean=float(np.mean(obs)), std=float(np.std(obs)),
                         min=float(np.min(obs)), max=float(np.max(obs)))
        per_column.append(entry)
    print(json.dumps({"state": state.as_array().tolist(),
                      "components": ["r_miss", "w1", "skew_mean", "kurt_mean",
                                     "balance", "retention", "h_imp", "h_out", "h_scl"],
                      "n_rows": t.n_rows, "columns": per_column},
                     indent=2, sort_keys=True))
    return 0


def _cmd_enumerate(args) -> int:
    suite = ActionSuite.by_name(args.suite)
    pipelines = enumerate_pipelines(suite, args.max_len)
    print(f"{args.suite}: {len(pipelines)} pipelines")
    if not args.count_only:
        for p in pipelines:
            print(p.canonical())
    return 0


def _sidecar(args):
    return args.sidecar_cmd.split() if args.sidecar_cmd else None


def _cmd_greedy(args) -> int:
    dirty = _load_input(args)
    suite = ActionSuite.by_name(args.suite)
    pool = enumerate_pipelines(suite)
    pipelines = pool if args.np_budget is None else subsample_pipelines(
        pool, args.np_budget, args.seed)
    harness = EvaluationHarness(make_evaluator(args.evaluator, _sidecar(args)),
                                seed=args.seed)
    session = SearchSession(dirty, harness)
    report = greedy_search(session, pipelines, args.reward)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "matrix.csv"),
              ["pipeline", "score", "accuracy", "ece", "error"],
              [(r.canonical, r.score, r.accuracy, r.ece, r.error or "")
               for r in report.rows])
    summary = {
        "reward": report.reward_kind,
        "best_pipeline": report.best.canonical,
        "best_score": report.best.score,
        "best_accuracy": report.best.accuracy,
        "best_ece": report.best.ece,
        "evaluator_calls": report.evaluator_calls,
        "baselines": [{"name": b.name, "pipeline": b.pipeline,
                       "accuracy": b.accuracy, "ece": b.ece}
                      for b in report.baselines],
    }
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _make_env(args, dirty) -> CleaningEnv:
    suite = ActionSuite.by_name(args.suite)
    harness = None
    if canonical_kind(args.reward) == "R7":
        harness = EvaluationHarness(make_evaluator(args.evaluator, _sidecar(args)),
                                    seed=args.seed)
    return CleaningEnv(EnvConfig(reward_kind=args.reward, suite=suite, seed=args.seed),
                       dirty, harness=harness)


def _write_train_outputs(args, ckpt, log) -> int:
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "policy.ckpt")
    ckpt.save(ckpt_path)
    write_csv(os.path.join(args.out, "train_log.csv"),
              ["episode", "end_step", "return", "rolling_mean"],
              [(i + 1, s, r, m) for i, (s, r, m) in enumerate(
                  zip(log.episode_end_steps, log.episode_returns,
                      log.rolling_series()))])
    info = {"episodes": len(log.episode_returns), "total_steps": log.total_steps,
            "convergence_step": log.convergence_step,
            "rolling_at_2k": log.rolling_at_2k,
            "final_rolling_mean": log.rolling_mean()}
    with open(os.path.join(args.out, "train_log.json"), "w", encoding="utf-8") as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    print(json.dumps({"checkpoint": ckpt_path, **info}, indent=2, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    dirty = _load_input(args)
    env = _make_env(args, dirty)
    spec = PolicySpec(action_dim=env.action_count, seed=args.seed)
    ckpt, log = train(env, spec, args.steps, source=os.path.basename(args.input))
    return _write_train_outputs(args, ckpt, log)


def _cmd_finetune(args) -> int:
    dirty = _load_input(args)
    ckpt = PolicyCheckpoint.load(args.checkpoint)
    env = _make_env(args, dirty)
    new_ckpt, log = fine_tune(ckpt, env, args.steps,
                              source=os.path.basename(args.input))
    return _write_train_outputs(args, new_ckpt, log)


def _cmd_evaluate_policy(args) -> int:
    dirty = _load_input(args)
    ckpt = PolicyCheckpoint.load(args.checkpoint)
    env = _make_env(args, dirty)
    agent = PolicyGradientAgent.from_checkpoint(ckpt)
    recorder = None
    sink = None
    if args.trajectory:
        sink = open(args.trajectory, "w", encoding="utf-8")
        recorder = TrajectoryRecorder(sink)
    obs = env.reset()
    rewards, applied, guards = [], [], []
    done = False
    while not done:
        out = env.step(agent.greedy_action(obs.as_array()))
        if recorder:
            recorder.write(out)
        rewards.append(out.reward)
        guards.extend(out.info["guards"])
        if not out.info["guards"]:
            applied.append(out.info["action"])
        obs = out.observation
        done = out.done
    if sink:
        sink.close()
    print(json.dumps({
        "pipeline": "->".join(applied) if applied else "no-op",
        "rewards": rewards,
        "return": float(sum(r * env.config.gamma ** i for i, r in enumerate(rewards))),
        "guards": guards,
        "final_state": obs.as_array().tolist(),
    }, indent=2, sort_keys=True))
    return 0


def _cmd_stats(args) -> int:
    with open(args.csv, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if not rows:
        raise InputError(f"{args.csv}: no data rows")
    for col in (args.x, args.y):
        if col not in rows[0]:
            raise InputError(f"{args.csv}: no column {col!r}")
    x = [float(r[args.x]) for r in rows]
    y = [float(r[args.y]) for r in rows]
    if args.test == "wilcoxon":
        res = wilcoxon_signed_rank(x, y, args.alternative)
        out = {"test": "wilcoxon", "statistic": res.statistic, "p_value": res.p_value,
               "n_effective": res.n_effective, "alternative": res.alternative,
               "method": res.method}
    else:
        res = spearman(x, y)
        out = {"test": "spearman", "rho": res.rho, "p_value": res.p_value,
               "n": res.n, "flagged": res.flagged}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    data["experiment"] = args.id
    if args.out:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    summary = run_experiment(data)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_plot_data(args) -> int:
    with open(args.summary, encoding="utf-8") as fh:
        report = json.load(fh)
    os.makedirs(args.out, exist_ok=True)
    path = emit_plot_data(report, args.kind, args.out)
    print(path)
    return 0


_COMMANDS = {
    "inject": _cmd_inject,
    "profile": _cmd_profile,
    "enumerate": _cmd_enumerate,
    "greedy": _cmd_greedy,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "evaluate-policy": _cmd_evaluate_policy,
    "stats": _cmd_stats,
    "experiment": _cmd_experiment,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except PipecleanError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
