"""Declarative experiment runner: six reproducible studies over injected
dataset artifacts, emitting long-format CSVs plus a JSON summary that echoes
the config.

Experiments consume pre-injected artifacts named `<name>_<kind>_p<rate>` in
the configured artifact directory; a missing artifact is a user error naming
the expected file. All runs are deterministic for a fixed config and seed.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .actions import ActionSuite, enumerate_pipelines, subsample_pipelines
from .agent import PolicyGradientAgent, PolicySpec, fine_tune, train, transfer_gap
from .env import CleaningEnv, EnvConfig
from .errors import InputError
from .evaluators import EvaluationHarness, make_evaluator
from .rewards import canonical_kind
from .search import SearchSession, greedy_search, rank_rewards, run_baselines
from .stats import spearman, wilcoxon_signed_rank
from .table import Table, load_table

EXPERIMENT_IDS = ("c1", "c2", "c3", "c4", "c5", "c6")

DEFAULT_REWARDS = ["R1", "R2", "R3", "R4", "R5", "R6", "R7"]
DEFAULT_C3_PROFILES = [["mcar", 15], ["mar", 15], ["out", 10], ["dup", 10]]
DEFAULT_C4_RATES = [0, 5, 10, 15, 20, 30]


@dataclass
class ExperimentConfig:
    experiment: str
    artifact_dir: str
    datasets: list                      # [{"name": ..., "label": ...}, ...]
    out: str
    suite: str = "discrete7"
    rewards: list = field(default_factory=lambda: list(DEFAULT_REWARDS))
    np_budget: int | None = 20
    seed: int = 42
    evaluator: str = "reference"
    sidecar_cmd: list | None = None
    options: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        exp = data.get("experiment", "").lower()
        if exp not in EXPERIMENT_IDS:
            raise InputError(f"experiment must be one of {EXPERIMENT_IDS}, got {exp!r}")
        for key in ("artifact_dir", "datasets", "out"):
            if key not in data:
                raise InputError(f"experiment config missing {key!r}")
        # c1 and c5 sweep exhaustively unless a budget is given explicitly
        default_np = 20 if exp in ("c2", "c3", "c4") else None
        return ExperimentConfig(
            experiment=exp,
            artifact_dir=data["artifact_dir"],
            datasets=list(data["datasets"]),
            out=data["out"],
            suite=data.get("suite", "discrete7"),
            rewards=list(data.get("rewards", DEFAULT_REWARDS)),
            np_budget=data.get("np", default_np),
            seed=int(data.get("seed", 42)),
            evaluator=data.get("evaluator", "reference"),
            sidecar_cmd=data.get("sidecar_cmd"),
            options=dict(data.get("options", {})),
        )

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment, "artifact_dir": self.artifact_dir,
            "datasets": self.datasets, "out": self.out, "suite": self.suite,
            "rewards": self.rewards, "np": self.np_budget, "seed": self.seed,
            "evaluator": self.evaluator, "sidecar_cmd": self.sidecar_cmd,
            "options": self.options,
        }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def resolve_artifact(artifact_dir: str, name: str, kind: str, rate: int) -> str:
    stem = f"{name}_{kind}_p{rate}"
    for ext in (".csv", ".parquet"):
        path = os.path.join(artifact_dir, stem + ext)
        if os.path.exists(path):
            return path
    raise InputError(f"missing dataset artifact {stem}(.csv|.parquet) in {artifact_dir}")


def _load_artifact(cfg: ExperimentConfig, entry: dict, kind: str, rate: int) -> Table:
    path = resolve_artifact(cfg.artifact_dir, entry["name"], kind, rate)
    return load_table(path, label=entry.get("label", "label"))


def _make_session(cfg: ExperimentConfig, dirty: Table) -> SearchSession:
    evaluator = make_evaluator(cfg.evaluator, cfg.sidecar_cmd)
    return SearchSession(dirty, EvaluationHarness(evaluator, seed=cfg.seed))


def _candidates(cfg: ExperimentConfig, suite: ActionSuite) -> list:
    pool = enumerate_pipelines(suite)
    if cfg.np_budget is None or cfg.np_budget >= len(pool):
        return pool
    return subsample_pipelines(pool, cfg.np_budget, cfg.seed)


def run_experiment(config) -> dict:
    """Dispatch one experiment; returns the summary dict (also written to
    summary.json along with the echoed config)."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    os.makedirs(cfg.out, exist_ok=True)
    runner = {
        "c1": _run_c1, "c2": _run_c2, "c3": _run_c3,
        "c4": _run_c4, "c5": _run_c5, "c6": _run_c6,
    }[cfg.experiment]
    summary = runner(cfg)
    summary["experiment"] = cfg.experiment
    summary["config"] = cfg.to_dict()
    with open(os.path.join(cfg.out, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    with open(os.path.join(cfg.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


# ---------------------------------------------------------------------------
# c1: reward taxonomy over an exhaustive pipeline grid


def _run_c1(cfg: ExperimentConfig) -> dict:
    suite = ActionSuite.by_name(cfg.suite)
    pipelines = enumerate_pipelines(suite)
    kinds = [canonical_kind(k) for k in cfg.rewards]
    matrix_rows, winner_rows, heatmap_rows, scatter_rows = [], [], [], []
    per_reward_scores = {k: [] for k in kinds}
    for entry in cfg.datasets:
        dirty = _load_artifact(cfg, entry, "mcar", int(cfg.options.get("rate", 15)))
        session = _make_session(cfg, dirty)
        taxonomy = rank_rewards(session, pipelines, kinds)
        for kind in kinds:
            for p in pipelines:
                matrix_rows.append(
                    (entry["name"], kind, p.canonical(),
                     taxonomy.scores[(kind, p.canonical())]))
            best = taxonomy.winners[kind]
            winner_rows.append((entry["name"], kind, best.canonical, best.score,
                                best.accuracy, best.ece))
            heatmap_rows.append((kind, entry["name"], best.score))
            scatter_rows.append((kind, entry["name"], best.score, best.accuracy))
            per_reward_scores[kind].append(best.score)
    write_csv(os.path.join(cfg.out, "matrix.csv"),
              ["dataset", "reward", "pipeline", "score"], matrix_rows)
    write_csv(os.path.join(cfg.out, "winners.csv"),
              ["dataset", "reward", "best_pipeline", "best_score", "accuracy", "ece"],
              winner_rows)
    write_csv(os.path.join(cfg.out, "heatmap.csv"),
              ["reward", "dataset", "best_score"], heatmap_rows)
    write_csv(os.path.join(cfg.out, "scatter.csv"),
              ["reward", "dataset", "best_score", "accuracy"], scatter_rows)
    return {
        "pipelines": len(pipelines),
        "mean_best_score": {k: float(np.mean(v)) for k, v in per_reward_scores.items()},
    }


# ---------------------------------------------------------------------------
# c2: baseline table, oracle vs trained policy


def _policy_rollout(env: CleaningEnv, agent) -> tuple:
    obs = env.reset()
    applied = []
    done = False
    while not done:
        out = env.step(agent.greedy_action(obs.as_array()))
        if not out.info["guards"]:
            applied.append(out.info["action"])
        obs = out.observation
        done = out.done
    pipeline = "->".join(applied) if applied else "no-op"
    return env.table, pipeline


def _rl_row(cfg, name, dirty, session, reward_kind, steps):
    suite = ActionSuite.by_name(cfg.suite)
    env = CleaningEnv(
        EnvConfig(reward_kind=reward_kind, suite=suite, seed=cfg.seed),
        dirty, harness=session.harness, rf_cache=session.rf_cache)
    spec = PolicySpec(action_dim=len(suite.actions), seed=cfg.seed)
    ckpt, _ = train(env, spec, steps, source=name)
    final_table, pipeline = _policy_rollout(env, PolicyGradientAgent.from_checkpoint(ckpt))
    res = session.harness.report_eval(final_table)
    return pipeline, res


def _run_c2(cfg: ExperimentConfig) -> dict:
    suite = ActionSuite.by_name(cfg.suite)
    rate = int(cfg.options.get("rate", 15))
    rl_steps = int(cfg.options.get("rl_steps", 0))
    rl_extra = int(cfg.options.get("rl_finetune_steps", 0))
    rows, divergence = [], []
    wins = ties = 0
    for entry in cfg.datasets:
        dirty = _load_artifact(cfg, entry, "mcar", rate)
        session = _make_session(cfg, dirty)
        candidates = _candidates(cfg, suite)
        for b in run_baselines(session):
            rows.append((entry["name"], b.name, b.pipeline, b.accuracy, b.ece))
        rf_report = greedy_search(session, candidates, "R3")
        tfm_report = greedy_search(session, candidates, "R7")
        for tag, rep in (("B4", rf_report), ("B5", tfm_report)):
            res = session.harness.report_eval(session.cleaned(rep.best.pipeline))
            rows.append((entry["name"], tag, rep.best.canonical, res.accuracy, res.ece))
        differs = rf_report.best.canonical != tfm_report.best.canonical
        divergence.append((entry["name"], rf_report.best.canonical,
                           tfm_report.best.canonical, differs))
        if differs:
            wins += 1
        else:
            ties += 1
        if rl_steps > 0:
            pipe, res = _rl_row(cfg, entry["name"], dirty, session, "R3", rl_steps)
            rows.append((entry["name"], "B-RL-RF", pipe, res.accuracy, res.ece))
            pipe, res = _rl_row(cfg, entry["name"], dirty, session, "R7",
                                rl_steps + rl_extra)
            rows.append((entry["name"], "B-RL-TFM", pipe, res.accuracy, res.ece))
    write_csv(os.path.join(cfg.out, "baselines.csv"),
              ["dataset", "method", "pipeline", "accuracy", "ece"], rows)
    write_csv(os.path.join(cfg.out, "divergence.csv"),
              ["dataset", "rf_pipeline", "tfm_pipeline", "differs"], divergence)
    return {"diverging_datasets": wins, "tying_datasets": ties}


# ---------------------------------------------------------------------------
# c3: accuracy/ECE by error type


def _run_c3(cfg: ExperimentConfig) -> dict:
    suite = ActionSuite.by_name(cfg.suite)
    profiles = cfg.options.get("profiles", DEFAULT_C3_PROFILES)
    rows = []
    for entry in cfg.datasets:
        for kind, rate in profiles:
            dirty = _load_artifact(cfg, entry, kind, int(rate))
            session = _make_session(cfg, dirty)
            candidates = _candidates(cfg, suite)
            baselines = {b.name: b for b in run_baselines(session)}
            for tag in ("B0", "B1"):
                b = baselines[tag]
                rows.append((entry["name"], f"{kind}_p{rate}", tag, b.accuracy, b.ece))
            for tag, kind_reward in (("B4", "R3"), ("B5", "R7")):
                rep = greedy_search(session, candidates, kind_reward)
                res = session.harness.report_eval(session.cleaned(rep.best.pipeline))
                rows.append((entry["name"], f"{kind}_p{rate}", tag, res.accuracy, res.ece))
    write_csv(os.path.join(cfg.out, "bars.csv"),
              ["dataset", "error_type", "method", "accuracy", "ece"], rows)
    means = {}
    for _, etype, method, acc, e in rows:
        means.setdefault((etype, method), []).append((acc, e))
    summary = {
        f"{etype}/{method}": {
            "accuracy": float(np.mean([a for a, _ in vals])),
            "ece": float(np.mean([e for _, e in vals])),
        }
        for (etype, method), vals in sorted(means.items())
    }
    return {"mean_by_error_type": summary}


# ---------------------------------------------------------------------------
# c4: MCAR rate sensitivity sweep


def _run_c4(cfg: ExperimentConfig) -> dict:
    suite = ActionSuite.by_name(cfg.suite)
    rates = [int(r) for r in cfg.options.get("rates", DEFAULT_C4_RATES)]
    rows, spearman_rows = [], []
    for entry in cfg.datasets:
        advantage = []
        for rate in rates:
            dirty = _load_artifact(cfg, entry, "mcar", rate)
            session = _make_session(cfg, dirty)
            candidates = _candidates(cfg, suite)
            baselines = {b.name: b for b in run_baselines(session)}
            rep = greedy_search(session, candidates, "R7")
            res = session.harness.report_eval(session.cleaned(rep.best.pipeline))
            rows.append((entry["name"], rate, "B0", baselines["B0"].accuracy,
                         baselines["B0"].ece))
            rows.append((entry["name"], rate, "B1", baselines["B1"].accuracy,
                         baselines["B1"].ece))
            rows.append((entry["name"], rate, "B5", res.accuracy, res.ece))
            advantage.append(res.accuracy - baselines["B1"].accuracy)
        sp = spearman([float(r) for r in rates], advantage)
        spearman_rows.append((entry["name"], sp.rho, sp.p_value, sp.n))
    write_csv(os.path.join(cfg.out, "curves.csv"),
              ["dataset", "rate", "method", "accuracy", "ece"], rows)
    write_csv(os.path.join(cfg.out, "spearman.csv"),
              ["dataset", "rho", "p_value", "n"], spearman_rows)

    def jsonable(v):  # constant advantage vectors give a flagged NaN result
        return None if isinstance(v, float) and np.isnan(v) else v

    return {"rates": rates,
            "spearman": {name: {"rho": jsonable(rho), "p": jsonable(p)}
                         for name, rho, p, _ in spearman_rows}}


# ---------------------------------------------------------------------------
# c5: discrete vs parameterized action space


def _run_c5(cfg: ExperimentConfig) -> dict:
    rate = int(cfg.options.get("rate", 15))
    reward = cfg.options.get("reward", "R3")
    rows = []
    discrete_scores, param_scores = [], []
    for entry in cfg.datasets:
        dirty = _load_artifact(cfg, entry, "mcar", rate)
        session = _make_session(cfg, dirty)
        best = {}
        for label, suite_name in (("discrete", "discrete7"), ("param", "param17")):
            suite = ActionSuite.by_name(suite_name)
            rep = greedy_search(session, _candidates(cfg, suite), reward)
            best[label] = rep.best
        delta = best["param"].score - best["discrete"].score
        rows.append((entry["name"], best["discrete"].score, best["param"].score,
                     delta, best["discrete"].canonical, best["param"].canonical))
        discrete_scores.append(best["discrete"].score)
        param_scores.append(best["param"].score)
    write_csv(os.path.join(cfg.out, "delta.csv"),
              ["dataset", "discrete_best", "param_best", "delta",
               "discrete_pipeline", "param_pipeline"], rows)
    improved = sum(1 for r in rows if r[3] > 0)
    summary = {"improved_on": improved, "datasets": len(rows),
               "mean_delta": float(np.mean([r[3] for r in rows]))}
    if len(rows) >= 2 and any(p != d for p, d in zip(param_scores, discrete_scores)):
        alternative = cfg.options.get("alternative", "two-sided")
        test = wilcoxon_signed_rank(param_scores, discrete_scores, alternative)
        summary["wilcoxon"] = {"statistic": test.statistic, "p_value": test.p_value,
                               "n_effective": test.n_effective, "method": test.method,
                               "alternative": test.alternative}
    return summary


# ---------------------------------------------------------------------------
# c6: cross-dataset transfer


def _run_c6(cfg: ExperimentConfig) -> dict:
    suite = ActionSuite.by_name(cfg.suite)
    rate = int(cfg.options.get("rate", 15))
    reward = cfg.options.get("reward", "R7")
    pretrain_steps = int(cfg.options.get("pretrain_steps", 3000))
    scratch_steps = int(cfg.options.get("scratch_steps", 2000))
    finetune_steps = int(cfg.options.get("finetune_steps", 2000))
    source_name = cfg.options.get("source") or cfg.datasets[0]["name"]
    source_entry = next(d for d in cfg.datasets if d["name"] == source_name)
    targets = [d for d in cfg.datasets if d["name"] != source_name]
    if not targets:
        raise InputError("c6 needs at least one target dataset besides the source")

    def make_env(entry):
        dirty = _load_artifact(cfg, entry, "mcar", rate)
        harness = EvaluationHarness(make_evaluator(cfg.evaluator, cfg.sidecar_cmd),
                                    seed=cfg.seed)
        return CleaningEnv(EnvConfig(reward_kind=reward, suite=suite, seed=cfg.seed),
                           dirty, harness=harness)

    spec = PolicySpec(action_dim=len(suite.actions), seed=cfg.seed)
    src_ckpt, _ = train(make_env(source_entry), spec, pretrain_steps,
                        source=source_name)
    curve_rows, gap_rows = [], []
    exceeds = 0
    for entry in targets:
        _, scratch_log = train(make_env(entry), spec, scratch_steps,
                               source=entry["name"])
        _, ft_log = fine_tune(src_ckpt, make_env(entry), finetune_steps,
                              source=entry["name"])
        for variant, log in (("scratch", scratch_log), ("finetune", ft_log)):
            series = log.rolling_series()
            for step, value in zip(log.episode_end_steps, series):
                curve_rows.append((entry["name"], step, variant, value))
        scratch_at_2k = scratch_log.rolling_mean_at_step(min(2000, scratch_steps))
        ft_at_2k = ft_log.rolling_mean_at_step(min(2000, finetune_steps))
        scratch_final = scratch_log.rolling_mean()
        gap = transfer_gap(scratch_at_2k, ft_at_2k)
        beats_final = ft_at_2k > scratch_final
        exceeds += int(beats_final)
        gap_rows.append((entry["name"], ft_at_2k, scratch_at_2k, gap,
                         scratch_final, beats_final))
    write_csv(os.path.join(cfg.out, "transfer.csv"),
              ["dataset", "step", "variant", "reward"], curve_rows)
    write_csv(os.path.join(cfg.out, "gap.csv"),
              ["dataset", "finetune_at_2k", "scratch_at_2k", "gap",
               "scratch_final", "exceeds_final_at_2k"], gap_rows)
    return {"source": source_name,
            "exceeds_scratch_final_at_2k": f"{exceeds}/{len(targets)}"}


# ---------------------------------------------------------------------------
# Plot-data emission


PLOT_SCHEMAS = {
    "heatmap": ("heatmap.csv", ["reward", "dataset", "best_score"]),
    "sensitivity": ("sensitivity.csv", ["dataset", "rate", "method", "accuracy"]),
    "transfer": ("transfer_plot.csv", ["dataset", "step", "variant", "reward"]),
}


def emit_plot_data(report: dict, kind: str, out_dir: str) -> str:
    """Reshape a finished experiment bundle into one long-format plot CSV."""
    if kind not in PLOT_SCHEMAS:
        raise InputError(f"unknown plot kind {kind!r}; choose from {sorted(PLOT_SCHEMAS)}")
    filename, header = PLOT_SCHEMAS[kind]
    src = {
        "heatmap": "heatmap.csv",
        "sensitivity": "curves.csv",
        "transfer": "transfer.csv",
    }[kind]
    src_path = os.path.join(report["config"]["out"], src)
    if not os.path.exists(src_path):
        raise InputError(f"report bundle is missing {src}; run the matching experiment first")
    with open(src_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = [[rec[h] for h in header if h in rec] for rec in reader]
    out_path = os.path.join(out_dir, filename)
    write_csv(out_path, header, rows)
    return out_path
