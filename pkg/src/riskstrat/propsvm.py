"""Unsupervised characterization pipeline: clustering, label proportions,
and the proportion-constrained linear SVM.

The pipeline clusters unlabeled training data (k = 2), treats each cluster as
a bag with a target positive-label proportion, and alternates between fitting
a hinge-loss SVM on the current instance labels and re-choosing labels per bag
to minimize hinge cost subject to the proportion constraint
|p_tilde_v(c) - p_v| <= epsilon.  Ground-truth labels never enter any fitting
routine here; orientation against truth is an evaluation-only step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    n_iter: int = 0


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _fix_empty(X, centroids, assignment):
    # Re-seed any empty cluster at the point farthest from its own centroid.
    k = centroids.shape[0]
    for _ in range(k):
        counts = np.bincount(assignment, minlength=k)
        empty = np.where(counts == 0)[0]
        if empty.size == 0:
            return centroids, assignment
        own = np.linalg.norm(X - centroids[assignment], axis=1)
        far = int(np.argmax(own))
        centroids = centroids.copy()
        centroids[empty[0]] = X[far]
        assignment = _assign(X, centroids)
    return centroids, assignment


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    n_init: int = 10,
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ style seeding, deterministic per seed.

    Runs n_init independent seedings and keeps the lowest-inertia result.
    Each run iterates to an assignment fixpoint or max_iters; an emptied
    cluster is re-seeded at the sample farthest from its current centroid.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 2 <= k < n:
        raise ValueError(f"need 2 <= k < n, got k={k}, n={n}")
    if n_init < 1:
        raise ValueError(f"n_init must be >= 1, got {n_init}")
    best = None
    for run_seed in np.random.SeedSequence(seed).generate_state(n_init):
        model = _kmeans_once(X, k, int(run_seed), max_iters)
        if best is None or model.inertia < best.inertia:
            best = model
    return best


def _kmeans_once(X: np.ndarray, k: int, seed: int, max_iters: int) -> ClusterModel:
    n = X.shape[0]
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[c] = X[rng.integers(n)]
            continue
        centroids[c] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centroids[c]) ** 2).sum(axis=1))

    assignment = _assign(X, centroids)
    centroids, assignment = _fix_empty(X, centroids, assignment)
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        centroids = np.vstack(
            [
                X[assignment == c].mean(axis=0)
                if np.any(assignment == c)
                else centroids[c]
                for c in range(k)
            ]
        )
        new_assignment = _assign(X, centroids)
        centroids, new_assignment = _fix_empty(X, centroids, new_assignment)
        if np.array_equal(new_assignment, assignment):
            assignment = new_assignment
            break
        assignment = new_assignment
    inertia = float(((X - centroids[assignment]) ** 2).sum())
    return ClusterModel(
        k=k, centroids=centroids, assignment=assignment,
        inertia=inertia, n_iter=n_iter,
    )


# ---------------------------------------------------------------------------
# Bags and label proportions
# ---------------------------------------------------------------------------


@dataclass
class BagSet:
    """Disjoint instance groups with per-bag target positive proportions."""

    bags: List[np.ndarray]
    proportions: List[float]
    epsilon: float = 0.1
    cluster_fractions: List[float] = field(default_factory=list)

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if len(self.bags) != len(self.proportions):
            raise ValueError("one proportion per bag required")
        for p in self.proportions:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"proportion {p} outside [0, 1]")
        self.bags = [np.asarray(b, dtype=int) for b in self.bags]

    def validate_partition(self, n: int) -> None:
        seen = np.concatenate(self.bags) if self.bags else np.empty(0, dtype=int)
        if len(seen) != n or len(np.unique(seen)) != n or (
            len(seen) and (seen.min() < 0 or seen.max() >= n)
        ):
            raise ValueError(f"bags do not partition the {n} training indices")


def label_proportions(
    assignment: np.ndarray,
    positive_cluster: int,
    epsilon: float = 0.1,
) -> BagSet:
    """Bags from a 2-cluster assignment with initial proportions (1, 0).

    The positive cluster's bag gets target proportion 1 and the other 0,
    softened downstream by epsilon.  The global cluster-size fractions
    |Omega_v| / n are recorded as diagnostics.
    """
    assignment = np.asarray(assignment, dtype=int)
    clusters = np.unique(assignment)
    if not np.array_equal(clusters, np.array([0, 1])):
        if clusters.size == 1:
            raise ValueError("empty bag: all samples fell into one cluster")
        raise ValueError(f"expected 2 clusters labeled 0/1, got {clusters.tolist()}")
    if positive_cluster not in (0, 1):
        raise ValueError(f"positive_cluster must be 0 or 1, got {positive_cluster}")
    n = len(assignment)
    bags = [np.where(assignment == v)[0] for v in (0, 1)]
    proportions = [1.0 if v == positive_cluster else 0.0 for v in (0, 1)]
    fractions = [len(b) / n for b in bags]
    return BagSet(
        bags=bags, proportions=proportions, epsilon=epsilon,
        cluster_fractions=fractions,
    )


# ---------------------------------------------------------------------------
# Linear hinge-loss SVM (dual SMO with maximal-violating-pair selection)
# ---------------------------------------------------------------------------


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    cost: float

    def decision(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


def svm_objective(X, labels, weights, bias, K) -> float:
    """Primal value 0.5 ||w||^2 + K sum_u max(0, 1 - c_u (w.x_u + b))."""
    margins = np.asarray(labels) * (np.asarray(X) @ weights + bias)
    return float(0.5 * np.dot(weights, weights) + K * np.maximum(0.0, 1.0 - margins).sum())


def _optimal_bias(s: np.ndarray, c: np.ndarray) -> float:
    # Exact 1-D minimization of sum_u hinge(c_u, s_u + b): convex piecewise
    # linear in b, slope increasing by one unit at each breakpoint c_u - s_u.
    breakpoints = np.sort(c - s)
    n_pos = int(np.sum(c == 1))
    n = len(c)
    # slope on the interval after crossing j breakpoints is (j - n_pos)
    if n_pos == 0:
        return float(breakpoints[0])
    if n_pos == n:
        return float(breakpoints[-1])
    lo = breakpoints[n_pos - 1]
    hi = breakpoints[n_pos]
    return float(0.5 * (lo + hi))


def fit_linear_svm(
    X: np.ndarray,
    labels: np.ndarray,
    K: float,
    tol: float = 1e-8,
    max_iter: int = 200_000,
) -> SvmModel:
    """Minimize 0.5 ||w||^2 + K sum hinge(c_u, w.x_u + b).

    Solves the box-constrained dual with the equality constraint sum(alpha*c)=0
    by deterministic maximal-violating-pair coordinate updates, then recovers
    the bias by exact one-dimensional minimization of the primal.
    """
    X = np.asarray(X, dtype=float)
    c = np.asarray(labels, dtype=float).ravel()
    if set(np.unique(c).tolist()) - {-1.0, 1.0}:
        raise ValueError("labels must be -1/+1")
    if np.unique(c).size < 2:
        raise ValueError("single-class input: need both labels present")
    if K <= 0:
        raise ValueError(f"cost K must be > 0, got {K}")
    n = X.shape[0]

    gram = X @ X.T
    alpha = np.zeros(n)
    kac = np.zeros(n)  # gram @ (alpha * c)
    for _ in range(max_iter):
        grad = c * kac - 1.0
        viol = -c * grad
        up = ((c > 0) & (alpha < K - 1e-15)) | ((c < 0) & (alpha > 1e-15))
        down = ((c < 0) & (alpha < K - 1e-15)) | ((c > 0) & (alpha > 1e-15))
        if not up.any() or not down.any():
            break
        vi = np.where(up, viol, -np.inf)
        vj = np.where(down, viol, np.inf)
        i = int(np.argmax(vi))
        j = int(np.argmin(vj))
        if vi[i] - vj[j] <= tol:
            break

        # Move along alpha_i += c_i t, alpha_j -= c_j t (keeps sum(alpha*c)=0).
        quad = gram[i, i] + gram[j, j] - 2.0 * gram[i, j]
        deriv = c[i] * grad[i] - c[j] * grad[j]
        t_star = np.inf if quad <= 1e-15 else -deriv / quad
        t_max_i = (K - alpha[i]) if c[i] > 0 else alpha[i]
        t_max_j = alpha[j] if c[j] > 0 else (K - alpha[j])
        t = min(t_star, t_max_i, t_max_j)
        if t <= 0:
            break
        alpha[i] += c[i] * t
        alpha[j] -= c[j] * t
        alpha[i] = min(max(alpha[i], 0.0), K)
        alpha[j] = min(max(alpha[j], 0.0), K)
        kac += t * (gram[:, i] - gram[:, j])

    w = X.T @ (alpha * c)
    b = _optimal_bias(X @ w, c)
    return SvmModel(weights=w, bias=b, cost=float(K))


# ---------------------------------------------------------------------------
# Proportion-constrained SVM
# ---------------------------------------------------------------------------


def _relabel_bag(
    s: np.ndarray, p: float, epsilon: float
) -> np.ndarray:
    """Hinge-optimal -1/+1 labels for one bag's decision values s, subject to
    the positive fraction staying within [p - epsilon, p + epsilon]."""
    n = len(s)
    lo = max(0, math.ceil((p - epsilon) * n - 1e-9))
    hi = min(n, math.floor((p + epsilon) * n + 1e-9))
    if lo > hi:
        raise ValueError(
            f"infeasible proportion constraint: no positive count in "
            f"[{(p - epsilon) * n:.3f}, {(p + epsilon) * n:.3f}] for bag of size {n}"
        )
    loss_pos = np.maximum(0.0, 1.0 - s)
    loss_neg = np.maximum(0.0, 1.0 + s)
    delta = loss_pos - loss_neg
    order = np.argsort(delta, kind="stable")
    prefix = np.concatenate([[0.0], np.cumsum(delta[order])])
    counts = np.arange(lo, hi + 1)
    best_k = int(counts[np.argmin(prefix[counts])])
    labels = np.full(n, -1, dtype=int)
    labels[order[:best_k]] = 1
    return labels


def bag_positive_fraction(labels: np.ndarray, bag: np.ndarray) -> float:
    return float(np.mean(np.asarray(labels)[bag] == 1))


def propsvm_objective(X, labels, model: SvmModel, K: float) -> float:
    return svm_objective(X, labels, model.weights, model.bias, K)


def fit_propsvm(
    X: np.ndarray,
    bags: BagSet,
    init_labels: np.ndarray,
    K: float = 1.0,
    max_outer_iters: int = 50,
    history: Optional[List[float]] = None,
) -> Tuple[SvmModel, np.ndarray]:
    """Alternating minimization of the proportion-constrained SVM objective.

    Each outer iteration fits the hinge-loss SVM on the current labels, then
    re-chooses labels per bag by sorting instances on the hinge-cost
    difference between the two labels and assigning +1 to the feasible count
    with the smallest total cost.  Stops at a label fixpoint or
    max_outer_iters; the joint objective is non-increasing across iterations.

    When `history` is a list, the joint objective after each outer iteration
    is appended to it.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(init_labels, dtype=int).copy()
    if labels.shape[0] != X.shape[0]:
        raise ValueError(f"{labels.shape[0]} labels for {X.shape[0]} samples")
    bags.validate_partition(X.shape[0])
    for bag, p in zip(bags.bags, bags.proportions):
        frac = bag_positive_fraction(labels, bag)
        if abs(frac - p) > bags.epsilon + 1e-9:
            raise ValueError(
                f"initial labels violate the proportion constraint: bag "
                f"fraction {frac:.3f} vs target {p:.3f} (epsilon {bags.epsilon})"
            )

    model = fit_linear_svm(X, labels, K)
    for _ in range(max_outer_iters):
        s = model.decision(X)
        new_labels = labels.copy()
        for bag, p in zip(bags.bags, bags.proportions):
            new_labels[bag] = _relabel_bag(s[bag], p, bags.epsilon)
        if history is not None:
            history.append(propsvm_objective(X, new_labels, model, K))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        model = fit_linear_svm(X, labels, K)
    return model, labels


# ---------------------------------------------------------------------------
# Baselines and evaluation-side orientation
# ---------------------------------------------------------------------------


def baseline_cluster_classify(
    X_train: np.ndarray,
    X_test: np.ndarray,
    mode: str,
    seed: int = 0,
    K: float = 1.0,
    init_assignment: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Two-cluster baselines; +1 in the output means cluster 1.

    "clustering" assigns test points to the nearest centroid;
    "clustering+svm" trains the linear SVM on the cluster labels and
    classifies the test points.  init_assignment, when given, replaces the
    internal k-means with an externally supplied train partition.
    """
    X_train = np.asarray(X_train, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    if init_assignment is None:
        assignment = kmeans(X_train, k=2, seed=seed).assignment
    else:
        assignment = np.asarray(init_assignment, dtype=int)
        if not np.array_equal(np.unique(assignment), np.array([0, 1])):
            raise ValueError("init_assignment must use both clusters 0 and 1")
    centroids = np.vstack(
        [X_train[assignment == v].mean(axis=0) for v in (0, 1)]
    )
    if mode == "clustering":
        return np.where(_assign(X_test, centroids) == 1, 1, -1)
    if mode == "clustering+svm":
        train_labels = np.where(assignment == 1, 1, -1)
        model = fit_linear_svm(X_train, train_labels, K)
        return model.predict(X_test)
    raise ValueError(f"unknown baseline mode {mode!r}")


def orient_clusters(
    assignment: np.ndarray, truth_labels: np.ndarray
) -> Dict[int, int]:
    """Choose the cluster -> class mapping maximizing agreement with truth.

    Used strictly for evaluation.  On a tie, cluster 0 maps to class -1.
    """
    assignment = np.asarray(assignment, dtype=int)
    truth = np.asarray(truth_labels, dtype=int)
    direct = int(np.sum(np.where(assignment == 1, 1, -1) == truth))
    flipped = int(np.sum(np.where(assignment == 1, -1, 1) == truth))
    if direct >= flipped:
        return {0: -1, 1: 1}
    return {0: 1, 1: -1}


def apply_orientation(assignment: np.ndarray, mapping: Dict[int, int]) -> np.ndarray:
    assignment = np.asarray(assignment, dtype=int)
    return np.where(assignment == 1, mapping[1], mapping[0])
