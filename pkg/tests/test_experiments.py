import csv
import json
import os

import pytest

from pipeclean.errors import InputError
from pipeclean.experiments import (ExperimentConfig, emit_plot_data,
                                   resolve_artifact, run_experiment)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def base_config(artifact_dir, out, experiment, **extra):
    cfg = {
        "experiment": experiment,
        "artifact_dir": artifact_dir,
        "datasets": [{"name": "synthA", "label": "label"}],
        "out": str(out),
        "seed": 42,
        "evaluator": "reference",
    }
    cfg.update(extra)
    return cfg


def test_resolve_artifact_error(tmp_path):
    with pytest.raises(InputError) as err:
        resolve_artifact(str(tmp_path), "synthA", "mcar", 15)
    assert "synthA_mcar_p15" in str(err.value)


def test_config_validation(artifact_dir, tmp_path):
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"experiment": "c9", "artifact_dir": artifact_dir,
                                    "datasets": [], "out": str(tmp_path)})
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"experiment": "c1"})
    cfg = ExperimentConfig.from_dict(base_config(artifact_dir, tmp_path, "c2"))
    assert cfg.np_budget == 20
    cfg = ExperimentConfig.from_dict(base_config(artifact_dir, tmp_path, "c5"))
    assert cfg.np_budget is None


def test_c1_matrix_shape(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c1", "c1",
                      rewards=["R1", "R3", "R6"])
    summary = run_experiment(cfg)
    matrix = read_csv(tmp_path / "c1" / "matrix.csv")
    assert len(matrix) == 3 * 112
    assert summary["pipelines"] == 112
    assert summary["mean_best_score"]["R1"] == 1.0
    assert summary["mean_best_score"]["R6"] == 1.0
    winners = {r["reward"]: r for r in read_csv(tmp_path / "c1" / "winners.csv")}
    assert winners["R6"]["best_pipeline"] == "no-op"
    heatmap = read_csv(tmp_path / "c1" / "heatmap.csv")
    assert [h for h in heatmap[0]] == ["reward", "dataset", "best_score"]


def test_c2_baseline_table(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c2", "c2", np=12)
    summary = run_experiment(cfg)
    rows = read_csv(tmp_path / "c2" / "baselines.csv")
    methods = {r["method"] for r in rows}
    assert {"B0", "B1", "B2", "B3", "B4", "B5"} <= methods
    b2 = next(r for r in rows if r["method"] == "B2")
    assert b2["pipeline"] == "impute(mean)->scale(zscore)"
    assert summary["diverging_datasets"] + summary["tying_datasets"] == 1
    div = read_csv(tmp_path / "c2" / "divergence.csv")
    assert len(div) == 1


def test_c3_error_type_bars(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c3", "c3", np=10)
    summary = run_experiment(cfg)
    rows = read_csv(tmp_path / "c3" / "bars.csv")
    etypes = {r["error_type"] for r in rows}
    assert etypes == {"mcar_p15", "mar_p15", "out_p10", "dup_p10"}
    assert {r["method"] for r in rows} == {"B0", "B1", "B4", "B5"}
    assert "mcar_p15/B5" in summary["mean_by_error_type"]


def test_c4_sensitivity_curves(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c4", "c4", np=10,
                      options={"rates": [0, 15, 30]})
    summary = run_experiment(cfg)
    rows = read_csv(tmp_path / "c4" / "curves.csv")
    assert {r["rate"] for r in rows} == {"0", "15", "30"}
    sp = read_csv(tmp_path / "c4" / "spearman.csv")
    assert len(sp) == 1
    assert "synthA" in summary["spearman"]


def test_c5_delta_and_wilcoxon(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c5", "c5", np=20)
    cfg["datasets"].append({"name": "synthB", "label": "label"})
    summary = run_experiment(cfg)
    rows = read_csv(tmp_path / "c5" / "delta.csv")
    assert len(rows) == 2
    for r in rows:
        assert float(r["delta"]) == pytest.approx(
            float(r["param_best"]) - float(r["discrete_best"]), abs=1e-12)
    assert summary["datasets"] == 2
    assert 0 <= summary["improved_on"] <= 2


def test_c6_transfer_and_gap(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c6", "c6",
                      options={"source": "synthA", "pretrain_steps": 120,
                               "scratch_steps": 120, "finetune_steps": 120,
                               "reward": "R1"})
    cfg["datasets"].append({"name": "synthB", "label": "label"})
    summary = run_experiment(cfg)
    gap = read_csv(tmp_path / "c6" / "gap.csv")
    assert len(gap) == 1 and gap[0]["dataset"] == "synthB"
    expected_gap = (float(gap[0]["scratch_at_2k"]) - float(gap[0]["finetune_at_2k"])) \
        / abs(float(gap[0]["scratch_at_2k"]))
    assert float(gap[0]["gap"]) == pytest.approx(expected_gap)
    curves = read_csv(tmp_path / "c6" / "transfer.csv")
    assert {r["variant"] for r in curves} == {"scratch", "finetune"}
    assert summary["exceeds_scratch_final_at_2k"].endswith("/1")


def test_c6_needs_target(artifact_dir, tmp_path):
    cfg = base_config(artifact_dir, tmp_path / "c6e", "c6",
                      options={"source": "synthA"})
    with pytest.raises(InputError):
        run_experiment(cfg)


def test_summary_echoes_config(artifact_dir, tmp_path):
    out = tmp_path / "c1b"
    cfg = base_config(artifact_dir, out, "c1", rewards=["R1"])
    run_experiment(cfg)
    echoed = json.load(open(out / "config.json"))
    assert echoed["experiment"] == "c1"
    assert echoed["seed"] == 42
    summary = json.load(open(out / "summary.json"))
    assert summary["config"]["rewards"] == ["R1"]


def test_emit_plot_data(artifact_dir, tmp_path):
    out = tmp_path / "c1c"
    cfg = base_config(artifact_dir, out, "c1", rewards=["R1", "R6"])
    run_experiment(cfg)
    report = json.load(open(out / "summary.json"))
    plot_dir = tmp_path / "plots"
    os.makedirs(plot_dir)
    path = emit_plot_data(report, "heatmap", str(plot_dir))
    rows = read_csv(path)
    assert set(rows[0]) == {"reward", "dataset", "best_score"}
    with pytest.raises(InputError):
        emit_plot_data(report, "violin", str(plot_dir))
    with pytest.raises(InputError):
        emit_plot_data(report, "transfer", str(plot_dir))
