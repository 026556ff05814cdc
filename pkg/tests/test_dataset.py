import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from riskstrat.dataset import (
    DataError,
    FeatureMatrix,
    RaterScores,
    Standardizer,
    adasyn_rebalance,
    aggregate_raters,
    binarize,
    build_task_targets,
    load_features,
    load_raters,
    make_cv_plan,
    save_features,
)
from tests.oracles import point_on_some_segment

rng = np.random.default_rng(99)


# ---------------------------------------------------------------------------
# load/save features
# ---------------------------------------------------------------------------


def test_load_features_basic(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,f0,f1\na,1.5,2\nb,3,4\nc,-1,0.25\n")
    fm = load_features(p)
    assert fm.n == 3 and fm.d == 2
    assert fm.sample_ids == ["a", "b", "c"]
    assert fm.data[2, 1] == 0.25


def test_load_features_empty_file(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("")
    with pytest.raises(DataError, match="no rows"):
        load_features(p)


def test_load_features_inf_cell_named(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,f0,f1\na,1,inf\n")
    with pytest.raises(DataError, match=r"row 0, column 1"):
        load_features(p)


def test_load_features_ragged_row(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,f0,f1\na,1,2\nb,3\n")
    with pytest.raises(DataError, match="ragged"):
        load_features(p)


def test_load_features_parse_error_location(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("id,f0\na,1\nb,zap\n")
    with pytest.raises(DataError, match=r"row 1, column 0"):
        load_features(p)


def test_feature_roundtrip_bit_exact(tmp_path):
    data = rng.normal(size=(7, 4)) * np.logspace(-8, 8, 4)
    fm = FeatureMatrix(data=data, sample_ids=[f"s{i}" for i in range(7)])
    p = tmp_path / "rt.csv"
    save_features(fm, p)
    back = load_features(p)
    assert back.sample_ids == fm.sample_ids
    assert np.array_equal(back.data, fm.data)


def test_feature_matrix_invariants():
    with pytest.raises(DataError):
        FeatureMatrix(data=np.array([[1.0, np.nan]]), sample_ids=["a"])
    with pytest.raises(DataError):
        FeatureMatrix(data=np.ones((2, 2)), sample_ids=["a", "a"])


# ---------------------------------------------------------------------------
# rater aggregation and binarization
# ---------------------------------------------------------------------------


def _raters(rows, task="malignancy", lo=1, hi=5):
    return RaterScores(
        scores=np.array(rows, dtype=float), task_name=task,
        scale_min=lo, scale_max=hi,
    )


def test_aggregate_mean():
    targets, mask = aggregate_raters(_raters([[5, 5, 4]]))
    assert targets[0] == pytest.approx(14 / 3)
    assert mask[0] == 1


def test_aggregate_pivot_exclusion():
    targets, mask = aggregate_raters(_raters([[2, 3, 4]]), exclude_at_pivot=True)
    assert targets[0] == 3.0
    assert mask[0] == 0


def test_aggregate_min_raters():
    targets, mask = aggregate_raters(
        _raters([[1, np.nan, np.nan], [2, 3, 4]]), min_raters=3
    )
    assert mask.tolist() == [0, 1]
    assert targets[0] == 1.0


def test_aggregate_permutation_invariant():
    a, _ = aggregate_raters(_raters([[1, 4, 5]]))
    b, _ = aggregate_raters(_raters([[5, 1, 4]]))
    assert a[0] == b[0]


def test_rater_scores_reject_empty_row():
    with pytest.raises(DataError, match="no rater scores"):
        _raters([[np.nan, np.nan, np.nan]])


def test_binarize_basic():
    assert binarize(np.array([4.0]), 1, 5)[0] == 1
    assert binarize(np.array([1.5]), 1, 5)[0] == -1


def test_binarize_pivot_collision_errors():
    with pytest.raises(DataError, match="pivot"):
        binarize(np.array([3.5]), 1, 6, mask=np.array([1]))


def test_binarize_pivot_tie_rule():
    out = binarize(np.array([3.5]), 1, 6, mask=np.array([1]), pivot_tie="negative")
    assert out[0] == -1


def test_binarize_masked_pivot_ok():
    out = binarize(np.array([3.0, 4.0]), 1, 5, mask=np.array([0, 1]))
    assert out.tolist() == [-1, 1]


def test_build_task_targets(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text(
        "id,task,s1,s2,s3\n"
        "a,malignancy,5,5,4\n"
        "b,malignancy,2,3,4\n"
        "a,texture,1,2,\n"
        "b,texture,4,5,5\n"
    )
    raters = load_raters(p)
    tt = build_task_targets(
        raters, ["a", "b"], exclude_at_pivot_tasks=["malignancy"], min_raters=1
    )
    assert tt.task_names == ["malignancy", "texture"]
    mi = tt.task_index("malignancy")
    assert tt.mask[1, mi] == 0  # mean 3.0 excluded
    assert tt.targets[0, mi] == pytest.approx(14 / 3)
    assert tt.binary_labels[0, tt.task_index("texture")] == -1


def test_build_task_targets_unknown_id(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("id,task,s1\nzz,malignancy,4\n")
    raters = load_raters(p)
    with pytest.raises(DataError, match="zz"):
        build_task_targets(raters, ["a", "b"])


# ---------------------------------------------------------------------------
# ADASYN
# ---------------------------------------------------------------------------


def _fm(X):
    return FeatureMatrix(data=X, sample_ids=[f"s{i}" for i in range(len(X))])


def test_adasyn_balanced_is_identity():
    X = rng.normal(size=(8, 3))
    labels = np.array([1, 1, 1, 1, -1, -1, -1, -1])
    out, lab = adasyn_rebalance(_fm(X), labels, k_neighbors=2, seed=0)
    assert out.n == 8
    assert np.array_equal(lab, labels)


def test_adasyn_counts_and_labels():
    X = np.vstack([rng.normal(size=(2, 2)) + 5, rng.normal(size=(4, 2))])
    labels = np.array([1, 1, -1, -1, -1, -1])
    out, lab = adasyn_rebalance(_fm(X), labels, k_neighbors=1, seed=3)
    assert out.n == 8
    assert np.sum(lab == 1) == np.sum(lab == -1) == 4
    assert all(l == 1 for l in lab[6:])


def test_adasyn_synthetic_points_on_minority_segments():
    X = np.vstack([rng.normal(size=(5, 2)) + 4, rng.normal(size=(11, 2))])
    labels = np.array([1] * 5 + [-1] * 11)
    out, lab = adasyn_rebalance(_fm(X), labels, k_neighbors=3, seed=7)
    minority = X[:5]
    for p in out.data[16:]:
        assert point_on_some_segment(p, minority, tol=1e-9)


def test_adasyn_stays_in_minority_hull():
    X = np.vstack([rng.normal(size=(6, 3)) + 3, rng.normal(size=(14, 3))])
    labels = np.array([1] * 6 + [-1] * 14)
    out, _ = adasyn_rebalance(_fm(X), labels, k_neighbors=3, seed=11)
    minority = X[:6]
    for p in out.data[20:]:
        # convex-hull membership via LP feasibility
        res = linprog(
            c=np.zeros(6),
            A_eq=np.vstack([minority.T, np.ones(6)]),
            b_eq=np.concatenate([p, [1.0]]),
            bounds=[(0, None)] * 6,
            method="highs",
        )
        assert res.status == 0, "synthetic point escaped the minority hull"


def test_adasyn_single_class_errors():
    X = rng.normal(size=(5, 2))
    with pytest.raises(DataError, match="single class"):
        adasyn_rebalance(_fm(X), np.ones(5), k_neighbors=1)


def test_adasyn_minority_too_small_errors():
    X = rng.normal(size=(6, 2))
    labels = np.array([1, -1, -1, -1, -1, -1])
    with pytest.raises(DataError, match="k_neighbors"):
        adasyn_rebalance(_fm(X), labels, k_neighbors=2)


def test_adasyn_deterministic():
    X = np.vstack([rng.normal(size=(4, 2)) + 3, rng.normal(size=(9, 2))])
    labels = np.array([1] * 4 + [-1] * 9)
    a, _ = adasyn_rebalance(_fm(X), labels, k_neighbors=2, seed=5)
    b, _ = adasyn_rebalance(_fm(X), labels, k_neighbors=2, seed=5)
    assert np.array_equal(a.data, b.data)


# ---------------------------------------------------------------------------
# CV plans
# ---------------------------------------------------------------------------


def test_cv_leave_one_out_partition():
    plan = make_cv_plan(np.ones(10), n_folds=10, seed=0, stratified=False)
    sizes = np.bincount(plan.assignments, minlength=10)
    assert np.all(sizes == 1)


def test_cv_exact_stratification():
    labels = np.array([1] * 10 + [-1] * 10)
    plan = make_cv_plan(labels, n_folds=10, seed=1, stratified=True)
    for f in range(10):
        fold_labels = labels[plan.assignments == f]
        assert len(fold_labels) == 2
        assert np.sum(fold_labels == 1) == 1


def test_cv_deterministic_and_partition():
    labels = rng.integers(0, 2, size=23)
    a = make_cv_plan(labels, n_folds=5, seed=7)
    b = make_cv_plan(labels, n_folds=5, seed=7)
    assert np.array_equal(a.assignments, b.assignments)
    sizes = np.bincount(a.assignments, minlength=5)
    assert sizes.max() - sizes.min() <= 1
    seen = np.concatenate([test for _, _, test in a.folds()])
    assert sorted(seen.tolist()) == list(range(23))


def test_cv_errors():
    with pytest.raises(DataError):
        make_cv_plan(np.ones(5), n_folds=1)
    with pytest.raises(DataError):
        make_cv_plan(np.ones(3), n_folds=4)


@settings(max_examples=30, deadline=None)
@given(st.integers(12, 60), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_cv_fold_balance_property(n, folds, seed):
    labels = (np.arange(n) % 3 == 0).astype(int)
    plan = make_cv_plan(labels, n_folds=folds, seed=seed, stratified=True)
    sizes = np.bincount(plan.assignments, minlength=folds)
    assert sizes.max() - sizes.min() <= 1
    global_pos = labels.sum()
    for f in range(folds):
        pos = labels[plan.assignments == f].sum()
        assert abs(pos - global_pos / folds) <= 1


# ---------------------------------------------------------------------------
# Standardizer
# ---------------------------------------------------------------------------


def test_standardizer_train_statistics():
    X = rng.normal(loc=3.0, scale=2.0, size=(50, 4))
    sc = Standardizer()
    Z = sc.fit_transform(X)
    assert np.abs(Z.mean(axis=0)).max() < 1e-12
    assert np.abs(Z.std(axis=0) - 1).max() < 1e-12


def test_standardizer_constant_column():
    X = np.ones((5, 2))
    Z = Standardizer().fit_transform(X)
    assert np.all(np.isfinite(Z))
