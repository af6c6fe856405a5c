import numpy as np
import pytest

from pipeclean.actions import (Action, ActionSuite, NOOP, Pipeline, apply_action,
                               apply_pipeline, dedup, enumerate_pipelines,
                               expected_pipeline_count, impute, remove_outliers,
                               scale, subsample_pipelines)
from pipeclean.errors import InputError
from pipeclean.inject import inject_duplicates, inject_mcar
from pipeclean.synth import make_blobs_table
from pipeclean.table import Table, categorical_column, numeric_column, table_fingerprint


@pytest.mark.parametrize("name,count,sizes", [
    ("discrete7", 112, (3, 2, 2)),
    ("extended9", 302, (3, 2, 3, 1)),
    ("param17", 834, (6, 9, 2)),
])
def test_enumeration_counts(name, count, sizes):
    suite = ActionSuite.by_name(name)
    pipelines = enumerate_pipelines(suite)
    assert len(pipelines) == count
    assert expected_pipeline_count(sizes) == count
    assert len({p.canonical() for p in pipelines}) == count


def test_enumeration_canonical_order():
    suite = ActionSuite.discrete7()
    pipelines = enumerate_pipelines(suite)
    assert pipelines[0] is NOOP
    lengths = [len(p) for p in pipelines]
    assert lengths == sorted(lengths)
    # singles come in suite order
    singles = [p.canonical() for p in pipelines if len(p) == 1]
    assert singles == [a.canonical() for a in suite.actions]


def test_pipeline_family_constraint():
    with pytest.raises(InputError):
        Pipeline((impute("mean"), impute("median")))
    with pytest.raises(InputError):
        Pipeline(tuple([impute("mean"), scale("minmax"), dedup(),
                        remove_outliers("iqr", 1.5)]))


def test_action_param_validation():
    with pytest.raises(InputError):
        impute("knn", k=0)
    with pytest.raises(InputError):
        impute("knn", k=21)
    with pytest.raises(InputError):
        remove_outliers("iqr", 0.4)
    with pytest.raises(InputError):
        remove_outliers("zscore", 5.5)
    with pytest.raises(InputError):
        Action("scaler", "log")


def test_canonical_strings():
    assert impute("knn", k=5).canonical() == "impute(knn,k=5)"
    p = Pipeline((impute("knn", k=5), scale("zscore")))
    assert p.canonical() == "impute(knn,k=5)->scale(zscore)"
    assert Pipeline(()).canonical() == "no-op"
    assert remove_outliers("iqr", 1.5).canonical() == "outlier(iqr,t=1.5)"


def test_pipeline_json_round_trip():
    p = Pipeline((impute("knn", k=7), remove_outliers("zscore", 2.5), scale("minmax")))
    assert Pipeline.from_json(p.to_json()) == p


def test_subsample_example():
    pool = enumerate_pipelines(ActionSuite.discrete7())
    assert sum(1 for p in pool if len(p) == 2) == 32
    assert sum(1 for p in pool if len(p) == 3) == 72
    picked = subsample_pipelines(pool, 20, 42)
    assert len(picked) == 20
    by_len = [sum(1 for p in picked if len(p) == k) for k in range(4)]
    # mandatory no-op + singles, then largest-remainder split of 12 over (32, 72)
    assert by_len == [1, 7, 4, 8]
    assert picked == subsample_pipelines(pool, 20, 42)


def test_subsample_boundary_and_error():
    pool = enumerate_pipelines(ActionSuite.discrete7())
    minimal = subsample_pipelines(pool, 8, 42)
    assert [len(p) for p in minimal] == [0] + [1] * 7
    with pytest.raises(InputError) as err:
        subsample_pipelines(pool, 7, 42)
    assert "8" in str(err.value)


def test_mean_impute_example():
    t = Table((numeric_column("a", [1.0, np.nan, 3.0]),))
    out = apply_action(t, impute("mean"))
    assert out.column("a").values.tolist() == [1.0, 2.0, 3.0]
    assert out.column("a").mask.sum() == 0


def test_median_impute_and_mode_fill():
    t = Table((numeric_column("a", [1.0, np.nan, 100.0, 2.0]),
               categorical_column("c", ["x", "", "y", "x"], [False, True, False, False])))
    out = apply_action(t, impute("median"))
    assert out.column("a").values[1] == pytest.approx(2.0)
    assert out.column("c").values[1] == "x"


def test_all_missing_column_left_with_warning():
    t = Table((numeric_column("a", [np.nan, np.nan]),
               numeric_column("b", [1.0, 2.0])))
    out = apply_action(t, impute("mean"))
    assert out.column("a").mask.all()
    assert any("entirely missing" in w for w in out.provenance.warnings)


def test_knn_impute_hand_example():
    t = Table((numeric_column("f0", [0.0, 0.1, 10.0, 10.0, 0.05]),
               numeric_column("f1", [0.0, 1.0, 5.0, 6.0, np.nan])))
    out = apply_action(t, impute("knn", k=2))
    # nearest complete rows by f0 are rows 0 and 1 -> mean(0, 1) = 0.5
    assert out.column("f1").values[4] == pytest.approx(0.5)


def test_knn_no_complete_row_falls_back():
    t = Table((numeric_column("a", [1.0, np.nan]),
               numeric_column("b", [np.nan, 4.0])))
    out = apply_action(t, impute("knn", k=3))
    assert out.column("a").values[1] == pytest.approx(1.0)
    assert out.column("b").values[0] == pytest.approx(4.0)


def test_iqr_identity_branch():
    t = Table((numeric_column("a", [1.0, 2.0, 3.0, 4.0]),))
    out = apply_action(t, remove_outliers("iqr", 1.5))
    assert out.n_rows == 4
    assert np.array_equal(out.column("a").values, t.column("a").values)


def test_outlier_removal_zscore():
    vals = np.concatenate([np.zeros(20), [100.0]])
    vals[:20] += np.linspace(-1, 1, 20)
    t = Table((numeric_column("a", vals),))
    out = apply_action(t, remove_outliers("zscore", 3.0))
    assert out.n_rows == 20
    assert out.column("a").values.max() < 100


def test_minmax_bounds():
    t = Table((numeric_column("a", [3.0, 7.0, 11.0]),))
    out = apply_action(t, scale("minmax"))
    assert out.column("a").values.min() == 0.0
    assert out.column("a").values.max() == 1.0


def test_zscore_constant_column_to_zero():
    t = Table((numeric_column("a", [5.0, 5.0, 5.0]),))
    out = apply_action(t, scale("zscore"))
    assert np.array_equal(out.column("a").values, np.zeros(3))


def test_quantile_scaler_outputs():
    t = Table((numeric_column("a", [10.0, 20.0, 30.0, 40.0]),))
    uniform = apply_action(t, scale("quantile", "uniform"))
    assert uniform.column("a").values.tolist() == [0.125, 0.375, 0.625, 0.875]
    normal = apply_action(t, scale("quantile", "normal"))
    assert np.all(np.isfinite(normal.column("a").values))
    assert normal.column("a").values[0] == pytest.approx(-normal.column("a").values[-1])


def test_scaler_preserves_mask_and_rows():
    t = make_blobs_table(40, 3, 2, seed=8)
    dirty = inject_mcar(t, 0.2, 42)
    for method in ("minmax", "zscore", "quantile"):
        out = apply_action(dirty, scale(method))
        assert out.n_rows == dirty.n_rows
        for c_in, c_out in zip(dirty.columns, out.columns):
            assert c_in.mask.tolist() == c_out.mask.tolist()


def test_dedup_keeps_first():
    t = Table((numeric_column("a", [1.0, 2.0, 1.0, 3.0, 2.0]),))
    out = apply_action(t, dedup())
    assert out.column("a").values.tolist() == [1.0, 2.0, 3.0]


def test_dedup_after_duplicate_injection():
    t = make_blobs_table(50, 3, 2, seed=9)
    dup = inject_duplicates(t, 0.2, 42)
    out = apply_action(dup, dedup())
    assert out.n_rows == 50


def test_imputer_preserves_rows_outlier_never_grows():
    dirty = inject_mcar(make_blobs_table(60, 4, 2, seed=10), 0.15, 42)
    for a in ActionSuite.extended9().actions:
        out = apply_action(dirty, a)
        if a.family == "imputer":
            assert out.n_rows == dirty.n_rows
        else:
            assert out.n_rows <= dirty.n_rows


def test_label_never_modified():
    dirty = inject_mcar(make_blobs_table(60, 4, 2, seed=11), 0.15, 42)
    for a in ActionSuite.extended9().actions:
        out = apply_action(dirty, a)
        if out.n_rows == dirty.n_rows:
            assert list(out.label_column().values) == list(dirty.label_column().values)


def test_noop_pipeline_identity():
    t = make_blobs_table(20, 2, 2, seed=12)
    assert apply_pipeline(t, NOOP) is t


def test_imputer_then_scaler_composition():
    dirty = inject_mcar(make_blobs_table(50, 3, 2, seed=13), 0.2, 42)
    out = apply_pipeline(dirty, Pipeline((impute("mean"), scale("minmax"))))
    for c in out.numeric_feature_columns():
        assert c.mask.sum() == 0
        assert c.values.min() >= 0.0 and c.values.max() <= 1.0


def test_order_sensitivity():
    # missing cells sit in the outlier row: imputing first keeps that row's
    # other cells in the fence computation, deleting first changes the fill
    vals_a = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 100.0])
    vals_b = np.array([10.0, 11.0, np.nan, 12.0, 13.0, np.nan])
    t = Table((numeric_column("a", vals_a), numeric_column("b", vals_b)))
    p1 = Pipeline((remove_outliers("zscore", 1.5), impute("mean")))
    p2 = Pipeline((impute("mean"), remove_outliers("zscore", 1.5)))
    out1 = apply_pipeline(t, p1)
    out2 = apply_pipeline(t, p2)
    assert table_fingerprint(out1) != table_fingerprint(out2)


def test_apply_pipeline_deterministic():
    dirty = inject_mcar(make_blobs_table(40, 3, 2, seed=14), 0.15, 42)
    p = Pipeline((impute("knn", k=3), remove_outliers("iqr", 2.0), scale("zscore")))
    assert table_fingerprint(apply_pipeline(dirty, p)) == \
        table_fingerprint(apply_pipeline(dirty, p))
