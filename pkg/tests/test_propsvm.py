import numpy as np
import pytest

from riskstrat.propsvm import (
    BagSet,
    _relabel_bag,
    apply_orientation,
    bag_positive_fraction,
    baseline_cluster_classify,
    fit_linear_svm,
    fit_propsvm,
    kmeans,
    label_proportions,
    orient_clusters,
    propsvm_objective,
    svm_objective,
)
from riskstrat.synth import make_llp_blobs
from tests.oracles import (
    adjusted_rand_index,
    propsvm_enumeration_oracle,
    svm_grid_oracle,
)

rng = np.random.default_rng(4242)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


def test_kmeans_separated_1d_points():
    X = np.array([[0.0], [0.1], [10.0], [10.1]])
    km = kmeans(X, k=2, seed=0)
    assert sorted(km.centroids.ravel().tolist()) == pytest.approx([0.05, 10.05])
    assert km.assignment[0] == km.assignment[1]
    assert km.assignment[2] == km.assignment[3]
    assert km.assignment[0] != km.assignment[2]


def test_kmeans_blobs_ari_one():
    data = make_llp_blobs(n=100, d=3, separation=8.0, seed=2)
    km = kmeans(data.X, k=2, seed=5)
    assert adjusted_rand_index(km.assignment, data.truth) == pytest.approx(1.0)


def test_kmeans_inertia_consistency_and_monotonicity():
    X = rng.normal(size=(60, 4))
    km = kmeans(X, k=3, seed=9)
    recomputed = float(((X - km.centroids[km.assignment]) ** 2).sum())
    assert km.inertia == pytest.approx(recomputed, abs=1e-8)
    one_round = kmeans(X, k=3, seed=9, max_iters=1, n_init=1)
    converged = kmeans(X, k=3, seed=9, max_iters=300, n_init=1)
    assert converged.inertia <= one_round.inertia + 1e-9


def test_kmeans_centroids_are_cluster_means():
    X = rng.normal(size=(50, 2))
    km = kmeans(X, k=2, seed=1)
    for c in range(2):
        assert np.abs(km.centroids[c] - X[km.assignment == c].mean(axis=0)).max() < 1e-8


def test_kmeans_deterministic():
    X = rng.normal(size=(40, 3))
    a = kmeans(X, k=2, seed=123)
    b = kmeans(X, k=2, seed=123)
    assert np.array_equal(a.assignment, b.assignment)
    assert np.array_equal(a.centroids, b.centroids)


def test_kmeans_k_bounds():
    X = rng.normal(size=(5, 2))
    with pytest.raises(ValueError):
        kmeans(X, k=5, seed=0)
    with pytest.raises(ValueError):
        kmeans(X, k=1, seed=0)


# ---------------------------------------------------------------------------
# label proportions / bags
# ---------------------------------------------------------------------------


def test_label_proportions_counting():
    bags = label_proportions(np.array([0, 0, 1, 1, 1]), positive_cluster=1)
    assert [len(b) for b in bags.bags] == [2, 3]
    assert bags.proportions == [0.0, 1.0]
    assert bags.cluster_fractions == pytest.approx([0.4, 0.6])


def test_label_proportions_single_cluster_errors():
    with pytest.raises(ValueError, match="empty bag"):
        label_proportions(np.zeros(5, dtype=int), positive_cluster=1)


def test_bag_positive_fraction():
    labels = np.array([1, 1, -1, 1])
    assert bag_positive_fraction(labels, np.arange(4)) == pytest.approx(0.75)


def test_bagset_validation():
    with pytest.raises(ValueError, match="proportion"):
        BagSet(bags=[np.arange(3)], proportions=[1.5])
    bs = BagSet(bags=[np.array([0, 1]), np.array([3])], proportions=[0.5, 1.0])
    with pytest.raises(ValueError, match="partition"):
        bs.validate_partition(4)


# ---------------------------------------------------------------------------
# linear SVM
# ---------------------------------------------------------------------------


def test_svm_separable_margins():
    X = np.array([[-2.0], [2.0]])
    c = np.array([-1, 1])
    model = fit_linear_svm(X, c, K=100.0)
    assert np.array_equal(model.predict(X), c)
    assert np.all(c * model.decision(X) >= 1 - 1e-9)


def test_svm_objective_beats_zero_point():
    X = rng.normal(size=(20, 3))
    c = np.where(rng.uniform(size=20) < 0.5, 1, -1)
    if np.unique(c).size < 2:
        c[0] = -c[0]
    K = 2.0
    model = fit_linear_svm(X, c, K)
    obj = svm_objective(X, c, model.weights, model.bias, K)
    assert obj <= K * len(c) + 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_svm_matches_grid_oracle_2d(seed):
    r = np.random.default_rng(seed)
    X = np.vstack([r.normal(size=(10, 2)) - 1, r.normal(size=(10, 2)) + 1])
    c = np.array([-1] * 10 + [1] * 10)
    K = 1.0
    model = fit_linear_svm(X, c, K)
    got = svm_objective(X, c, model.weights, model.bias, K)
    want = svm_grid_oracle(X, c, K)
    assert abs(got - want) < 1e-3


def test_svm_single_class_errors():
    with pytest.raises(ValueError, match="single-class"):
        fit_linear_svm(rng.normal(size=(5, 2)), np.ones(5), K=1.0)


def test_svm_permutation_invariant_decisions():
    X = rng.normal(size=(30, 3))
    c = np.where(X[:, 0] + 0.3 * rng.normal(size=30) > 0, 1, -1)
    if np.unique(c).size < 2:
        c[0] = -c[0]
    model = fit_linear_svm(X, c, K=1.0)
    perm = rng.permutation(30)
    model_p = fit_linear_svm(X[perm], c[perm], K=1.0)
    signs = np.sign(model.decision(X))
    signs_p = np.sign(model_p.decision(X))
    assert np.array_equal(signs, signs_p)


# ---------------------------------------------------------------------------
# proportion-constrained SVM
# ---------------------------------------------------------------------------


def test_relabel_bag_unconstrained_is_sign_labeling():
    s = rng.normal(size=25)
    labels = _relabel_bag(s, p=0.4, epsilon=1.0)
    assert np.array_equal(labels, np.where(s > 0, 1, -1))


def test_relabel_bag_exact_count():
    s = np.array([-2.0, -1.0, 0.5, 2.0])
    labels = _relabel_bag(s, p=0.5, epsilon=0.0)
    assert np.sum(labels == 1) == 2
    assert np.array_equal(labels, np.array([-1, -1, 1, 1]))


def test_relabel_bag_infeasible_errors():
    with pytest.raises(ValueError, match="infeasible"):
        _relabel_bag(np.zeros(4), p=0.3, epsilon=0.0)


def test_propsvm_fixpoint_single_iteration():
    X = np.array([[-2.0], [-1.5], [1.5], [2.0]])
    init = np.array([-1, -1, 1, 1])
    bags = BagSet(bags=[np.arange(4)], proportions=[0.5], epsilon=0.0)
    history = []
    model, labels = fit_propsvm(X, bags, init, K=5.0, history=history)
    assert np.array_equal(labels, init)
    assert len(history) == 1


def test_propsvm_matches_enumeration_oracle():
    for seed in range(4):
        r = np.random.default_rng(seed)
        n = 6
        x = np.sort(r.normal(size=n) * 2)
        K = 1.0
        n_pos = n // 2
        init = np.full(n, -1)
        init[r.choice(n, size=n_pos, replace=False)] = 1
        bags = BagSet(bags=[np.arange(n)], proportions=[n_pos / n], epsilon=0.0)
        model, labels = fit_propsvm(x.reshape(-1, 1), bags, init, K=K)
        got = propsvm_objective(x.reshape(-1, 1), labels, model, K)
        want = propsvm_enumeration_oracle(x, n_pos, K)
        assert got <= want + 1e-3


def test_propsvm_objective_monotone_and_constraint_kept():
    data = make_llp_blobs(n=120, d=2, separation=3.0, flip_rate=0.2,
                          flip_mode="symmetric", seed=3)
    init = data.init_labels
    assignment = (init == 1).astype(int)
    bags = label_proportions(assignment, positive_cluster=1, epsilon=0.25)
    history = []
    model, labels = fit_propsvm(data.X, bags, init, K=1.0, history=history)
    diffs = np.diff(history)
    assert np.all(diffs <= 1e-6)
    for bag, p in zip(bags.bags, bags.proportions):
        assert abs(bag_positive_fraction(labels, bag) - p) <= bags.epsilon + 1e-9


def test_propsvm_infeasible_init_errors():
    X = rng.normal(size=(6, 2))
    init = np.array([1, 1, 1, 1, 1, -1])
    bags = BagSet(bags=[np.arange(6)], proportions=[0.0], epsilon=0.1)
    with pytest.raises(ValueError, match="initial labels violate"):
        fit_propsvm(X, bags, init, K=1.0)


def test_propsvm_recovers_from_noisy_init():
    # Two blobs, the positive one with an appearance-outlier component; 20%
    # of the initial labels flipped (skewed toward the negative class).  The
    # proportion-constrained refinement should beat a plain SVM trained on
    # the noisy labels on held-out data.
    wins = 0
    for seed in range(10):
        data = make_llp_blobs(n=400, d=2, separation=4.0, flip_rate=0.2,
                              flip_mode="biased", flip_bias=0.7,
                              outlier_frac=0.3, outlier_shift=14.0, seed=seed)
        r = np.random.default_rng(seed + 999)
        idx = r.permutation(400)
        tr, te = idx[:200], idx[200:]
        Xtr, Xte = data.X[tr], data.X[te]
        init = data.init_labels[tr]
        assignment = (init == 1).astype(int)
        bags = label_proportions(assignment, positive_cluster=1, epsilon=0.28)
        model, _ = fit_propsvm(Xtr, bags, init, K=1.0)
        plain = fit_linear_svm(Xtr, init, K=1.0)
        acc_prop = np.mean(model.predict(Xte) == data.truth[te])
        acc_plain = np.mean(plain.predict(Xte) == data.truth[te])
        wins += acc_prop > acc_plain
    assert wins >= 8


# ---------------------------------------------------------------------------
# baselines and orientation
# ---------------------------------------------------------------------------


def test_baselines_perfect_on_separable_blobs():
    data = make_llp_blobs(n=160, d=2, separation=8.0, seed=6)
    Xtr, Xte = data.X[:100], data.X[100:]
    truth_te = data.truth[100:]
    for mode in ("clustering", "clustering+svm"):
        pred = baseline_cluster_classify(Xtr, Xte, mode, seed=0, K=10.0)
        mapping = orient_clusters(((pred + 1) // 2), truth_te)
        oriented = apply_orientation(((pred + 1) // 2), mapping)
        assert np.mean(oriented == truth_te) == 1.0


def test_clustering_baseline_is_nearest_centroid():
    data = make_llp_blobs(n=80, d=2, separation=5.0, seed=8)
    Xtr, Xte = data.X[:60], data.X[60:]
    pred = baseline_cluster_classify(Xtr, Xte, "clustering", seed=3)
    km = kmeans(Xtr, k=2, seed=3)
    d2 = ((Xte[:, None, :] - km.centroids[None, :, :]) ** 2).sum(axis=2)
    want = np.where(np.argmin(d2, axis=1) == 1, 1, -1)
    assert np.array_equal(pred, want)


def test_baseline_unknown_mode():
    X = rng.normal(size=(10, 2))
    with pytest.raises(ValueError, match="unknown baseline"):
        baseline_cluster_classify(X, X, "zap")


def test_orient_clusters_relabeling():
    truth = np.array([1, 1, -1, -1])
    assignment = np.array([0, 0, 1, 1])  # clusters anti-aligned with truth
    mapping = orient_clusters(assignment, truth)
    assert mapping == {0: 1, 1: -1}
    assert np.array_equal(apply_orientation(assignment, mapping), truth)


def test_orient_clusters_tie_break():
    truth = np.array([1, 1, -1, -1])
    assignment = np.array([1, 0, 1, 0])  # both mappings agree on exactly 2
    assert orient_clusters(assignment, truth) == {0: -1, 1: 1}


def test_orient_clusters_null_agreement():
    # An uninformative grouping: orientation can do no better than predicting
    # the majority class, so agreement tracks the class prior.
    r = np.random.default_rng(0)
    truth = np.where(r.uniform(size=4000) < 0.7, 1, -1)
    assignment = np.ones(4000, dtype=int)
    assignment[0] = 0
    mapping = orient_clusters(assignment, truth)
    agree = np.mean(apply_orientation(assignment, mapping) == truth)
    assert abs(agree - 0.7) < 0.03
    # a balanced independent assignment can still never fall under chance
    assignment = r.integers(0, 2, size=4000)
    mapping = orient_clusters(assignment, truth)
    agree = np.mean(apply_orientation(assignment, mapping) == truth)
    assert agree >= 0.5 - 1e-12
