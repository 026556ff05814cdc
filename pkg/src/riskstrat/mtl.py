"""Supervised regression engines for multi-task score prediction.

Single-task lasso/ridge, trace-norm multi-task regression, data-driven task
graph estimation, rater-inconsistency weighting, and the graph-regularized
sparse multi-task objective

    sum_i ||(X_i + Psi_i) W_i - Y_i||_2^2  +  rho1 ||W S||_F^2  +  rho2 ||W||_1

solved with the accelerated proximal gradient engine in `proxgrad`.  W is a
d x M matrix with one coefficient column per task; S is the incidence matrix
of the task graph and L = S S^T its Laplacian.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset import RaterScores
from .proxgrad import (
    OptimizerConfig,
    ProxTerm,
    SmoothObjective,
    nuclear_norm,
    prox_l1,
    prox_nuclear,
    solve_apg,
)


@dataclass
class WeightMatrix:
    """d x M coefficient matrix, one column per task."""

    W: np.ndarray
    task_names: List[str]

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        if self.W.ndim != 2:
            raise ValueError(f"W must be 2-D, got shape {self.W.shape}")
        if self.W.shape[1] != len(self.task_names):
            raise ValueError(
                f"{len(self.task_names)} task names for {self.W.shape[1]} columns"
            )
        if not np.all(np.isfinite(self.W)):
            raise ValueError("W contains non-finite entries")

    def column(self, task: str) -> np.ndarray:
        return self.W[:, self.task_index(task)]

    def task_index(self, task: str) -> int:
        try:
            return self.task_names.index(task)
        except ValueError:
            raise KeyError(
                f"unknown task {task!r}; have {self.task_names}"
            ) from None


@dataclass
class StructureMatrix:
    """Task graph as a signed incidence matrix S (M x |E|).

    Column e for edge (a, b) has +1 at row a and -1 at row b; the Laplacian
    L = S S^T is symmetric PSD with zero row sums.
    """

    S: np.ndarray
    edges: List[Tuple[int, int]]

    def __post_init__(self):
        self.S = np.asarray(self.S, dtype=float)
        if self.S.ndim != 2:
            raise ValueError(f"S must be 2-D, got shape {self.S.shape}")
        if self.S.shape[1] != len(self.edges):
            raise ValueError(
                f"{len(self.edges)} edges for {self.S.shape[1]} incidence columns"
            )
        for j in range(self.S.shape[1]):
            col = self.S[:, j]
            if sorted(col[col != 0].tolist()) != [-1.0, 1.0]:
                raise ValueError(
                    f"incidence column {j} must contain exactly one +1 and one -1"
                )

    @property
    def n_tasks(self) -> int:
        return self.S.shape[0]

    @property
    def laplacian(self) -> np.ndarray:
        return self.S @ self.S.T


def structure_from_edges(n_tasks: int, edges: Sequence[Tuple[int, int]]) -> StructureMatrix:
    """Build the incidence matrix for an explicit edge list."""
    S = np.zeros((n_tasks, len(edges)))
    for j, (a, b) in enumerate(edges):
        if a == b or not (0 <= a < n_tasks and 0 <= b < n_tasks):
            raise ValueError(f"invalid edge ({a}, {b}) for {n_tasks} tasks")
        S[a, j] = 1.0
        S[b, j] = -1.0
    return StructureMatrix(S=S, edges=[tuple(e) for e in edges])


@dataclass
class RegularizationConfig:
    rho1: float = 1.0
    rho2: float = 10.0
    rho_trace: float = 1.0
    corr_threshold: float = 0.5

    def __post_init__(self):
        for name in ("rho1", "rho2", "rho_trace"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.corr_threshold <= 1.0:
            raise ValueError("corr_threshold must lie in [0, 1]")


@dataclass
class InconsistencyVector:
    """Per-sample rater-disagreement weights for one task; always >= 1."""

    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        if np.any(self.psi < 1.0 - 1e-12):
            raise ValueError("inconsistency scores must be >= 1")


def inconsistency_scores(raw: RaterScores) -> InconsistencyVector:
    """Disagreement weight psi[j] = exp(sum_r (x_r - mu)^2 / (2 sigma)).

    mu and sigma are the mean and population standard deviation of sample j's
    present scores.  Full agreement (sigma = 0) gives the continuous limit
    psi = 1; disagreement grows the weight exponentially.
    """
    scores = raw.scores
    present = ~np.isnan(scores)
    if np.any(~present.any(axis=1)):
        j = int(np.argmin(present.any(axis=1)))
        raise ValueError(f"sample {raw.sid(j)} has no rater scores")
    psi = np.empty(scores.shape[0])
    for j in range(scores.shape[0]):
        vals = scores[j, present[j]]
        mu = vals.mean()
        sigma = vals.std()
        if sigma == 0:
            psi[j] = 1.0
        else:
            psi[j] = np.exp(np.sum((vals - mu) ** 2) / (2.0 * sigma))
    return InconsistencyVector(psi=psi)


def graph_penalty(W: np.ndarray | WeightMatrix, S: StructureMatrix) -> float:
    """||W S||_F^2, asserted equal to tr(W L W^T) within 1e-10."""
    Wm = W.W if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    if Wm.shape[1] != S.n_tasks:
        raise ValueError(
            f"W has {Wm.shape[1]} columns but S describes {S.n_tasks} tasks"
        )
    frob = float(np.sum((Wm @ S.S) ** 2))
    trace_form = float(np.trace(Wm @ S.laplacian @ Wm.T))
    if abs(frob - trace_form) > 1e-10 * max(1.0, abs(frob)):
        raise AssertionError(
            f"graph penalty mismatch: ||WS||_F^2 = {frob!r} vs tr(WLW^T) = {trace_form!r}"
        )
    return frob


# ---------------------------------------------------------------------------
# Single-task fits
# ---------------------------------------------------------------------------


def _l1_prox_term(weight: float) -> ProxTerm:
    return ProxTerm(
        value=lambda W: weight * float(np.abs(W).sum()),
        prox=lambda W, step: prox_l1(W, weight * step),
    )


def _nuclear_prox_term(weight: float) -> ProxTerm:
    return ProxTerm(
        value=lambda W: weight * nuclear_norm(W),
        prox=lambda W, step: prox_nuclear(W, weight * step),
    )


def fit_lasso(
    X: np.ndarray,
    y: np.ndarray,
    rho2: float,
    cfg: Optional[OptimizerConfig] = None,
) -> np.ndarray:
    """Minimize ||X w - y||_2^2 + rho2 ||w||_1."""
    if rho2 < 0:
        raise ValueError(f"rho2 must be >= 0, got {rho2}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    f = SmoothObjective(
        value=lambda w: float(np.sum((X @ w - y) ** 2)),
        gradient=lambda w: 2.0 * (X.T @ (X @ w - y)),
    )
    g = _l1_prox_term(rho2) if rho2 > 0 else None
    report = solve_apg(f, g, np.zeros(X.shape[1]), cfg)
    return report.final_W


def lasso_objective(X, y, w, rho2) -> float:
    return float(np.sum((X @ w - y) ** 2) + rho2 * np.abs(w).sum())


def fit_ridge(X: np.ndarray, y: np.ndarray, rho2: float) -> np.ndarray:
    """Closed-form minimizer of ||X w - y||_2^2 + rho2 ||w||_2^2."""
    if rho2 < 0:
        raise ValueError(f"rho2 must be >= 0, got {rho2}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    A = X.T @ X + rho2 * np.eye(X.shape[1])
    try:
        return np.linalg.solve(A, X.T @ y)
    except np.linalg.LinAlgError:
        raise ValueError(
            "singular normal equations; increase rho2 or drop collinear features"
        ) from None


# ---------------------------------------------------------------------------
# Multi-task fits
# ---------------------------------------------------------------------------


def _as_task_lists(X_per_task, Y_per_task):
    Xs = [np.asarray(X, dtype=float) for X in X_per_task]
    Ys = [np.asarray(y, dtype=float).ravel() for y in Y_per_task]
    if len(Xs) != len(Ys):
        raise ValueError(f"{len(Xs)} design matrices for {len(Ys)} target vectors")
    d = Xs[0].shape[1]
    for i, (X, y) in enumerate(zip(Xs, Ys)):
        if X.shape[1] != d:
            raise ValueError(f"task {i}: feature dimension {X.shape[1]} != {d}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"task {i}: {X.shape[0]} rows vs {y.shape[0]} targets")
    return Xs, Ys, d


def _default_names(M: int, task_names: Optional[Sequence[str]]) -> List[str]:
    if task_names is None:
        return [f"task{i}" for i in range(M)]
    if len(task_names) != M:
        raise ValueError(f"{len(task_names)} names for {M} tasks")
    return list(task_names)


def multi_task_squared_loss(Xs, Ys) -> SmoothObjective:
    """sum_i ||X_i W_i - Y_i||_2^2 with per-column gradients 2 X_i^T (X_i W_i - Y_i)."""

    def value(W):
        return float(
            sum(np.sum((X @ W[:, i] - y) ** 2) for i, (X, y) in enumerate(zip(Xs, Ys)))
        )

    def gradient(W):
        G = np.empty_like(W)
        for i, (X, y) in enumerate(zip(Xs, Ys)):
            G[:, i] = 2.0 * (X.T @ (X @ W[:, i] - y))
        return G

    return SmoothObjective(value=value, gradient=gradient)


def fit_trace_mtl(
    X_per_task: Sequence[np.ndarray],
    Y_per_task: Sequence[np.ndarray],
    rho_trace: float,
    cfg: Optional[OptimizerConfig] = None,
    task_names: Optional[Sequence[str]] = None,
) -> WeightMatrix:
    """Minimize sum_i ||X_i W_i - Y_i||_2^2 + rho_trace ||W||_*."""
    if rho_trace < 0:
        raise ValueError(f"rho_trace must be >= 0, got {rho_trace}")
    Xs, Ys, d = _as_task_lists(X_per_task, Y_per_task)
    f = multi_task_squared_loss(Xs, Ys)
    g = _nuclear_prox_term(rho_trace) if rho_trace > 0 else None
    report = solve_apg(f, g, np.zeros((d, len(Xs))), cfg)
    return WeightMatrix(W=report.final_W, task_names=_default_names(len(Xs), task_names))


def graph_sparse_smooth_objective(
    X_per_task: Sequence[np.ndarray],
    Psi_per_task: Optional[Sequence[Optional[np.ndarray]]],
    Y_per_task: Sequence[np.ndarray],
    S: Optional[StructureMatrix],
    rho1: float,
) -> SmoothObjective:
    """Smooth part of the graph-regularized sparse objective.

    Each design gets the per-sample inconsistency weight added to every
    feature of the corresponding row (X_i + Psi_i); the graph term contributes
    rho1 * tr(W L W^T) with gradient 2 rho1 (W L).
    """
    Xs, Ys, _ = _as_task_lists(X_per_task, Y_per_task)
    if Psi_per_task is not None:
        Xt = []
        for i, (X, psi) in enumerate(zip(Xs, Psi_per_task)):
            if psi is None:
                Xt.append(X)
                continue
            psi = np.asarray(psi, dtype=float).ravel()
            if psi.shape[0] != X.shape[0]:
                raise ValueError(
                    f"task {i}: {psi.shape[0]} inconsistency scores for "
                    f"{X.shape[0]} rows"
                )
            if np.any(~np.isfinite(psi)):
                raise ValueError(f"task {i}: non-finite inconsistency score")
            Xt.append(X + psi[:, None])
        Xs = Xt
    L = S.laplacian if (S is not None and rho1 > 0) else None
    base = multi_task_squared_loss(Xs, Ys)

    if L is None:
        return base

    def value(W):
        return base.value(W) + rho1 * float(np.trace(W @ L @ W.T))

    def gradient(W):
        return base.gradient(W) + 2.0 * rho1 * (W @ L)

    return SmoothObjective(value=value, gradient=gradient)


def fit_graph_sparse_mtl(
    X_per_task: Sequence[np.ndarray],
    Psi_per_task: Optional[Sequence[Optional[np.ndarray]]],
    Y_per_task: Sequence[np.ndarray],
    S: Optional[StructureMatrix],
    rho1: float,
    rho2: float,
    cfg: Optional[OptimizerConfig] = None,
    task_names: Optional[Sequence[str]] = None,
) -> WeightMatrix:
    """Fit the graph-regularized sparse multi-task objective."""
    if rho1 < 0 or rho2 < 0:
        raise ValueError("rho1 and rho2 must be >= 0")
    if S is not None and S.n_tasks != len(X_per_task):
        raise ValueError(
            f"structure matrix covers {S.n_tasks} tasks, got {len(X_per_task)} designs"
        )
    f = graph_sparse_smooth_objective(X_per_task, Psi_per_task, Y_per_task, S, rho1)
    g = _l1_prox_term(rho2) if rho2 > 0 else None
    d = np.asarray(X_per_task[0]).shape[1]
    report = solve_apg(f, g, np.zeros((d, len(X_per_task))), cfg)
    return WeightMatrix(
        W=report.final_W, task_names=_default_names(len(X_per_task), task_names)
    )


def graph_sparse_objective(
    X_per_task, Psi_per_task, Y_per_task, S, rho1, rho2, W
) -> float:
    """Full objective value at W (smooth + rho2 ||W||_1)."""
    f = graph_sparse_smooth_objective(X_per_task, Psi_per_task, Y_per_task, S, rho1)
    Wm = W.W if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    return f.value(Wm) + rho2 * float(np.abs(Wm).sum())


def estimate_structure(
    X: np.ndarray,
    Y_all_tasks: np.ndarray,
    rho2: float,
    corr_threshold: float = 0.5,
    cfg: Optional[OptimizerConfig] = None,
    mask: Optional[np.ndarray] = None,
) -> StructureMatrix:
    """Estimate the task graph from data.

    Fits a lasso per task, normalizes each coefficient column to unit norm,
    thresholds the absolute Pearson correlation between columns, and emits one
    incidence column per surviving pair.  A task whose lasso coefficients are
    all zero joins no edge.  mask (n x M of 0/1) restricts each task's fit to
    its included rows.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y_all_tasks, dtype=float)
    if Y.ndim != 2 or Y.shape[1] < 2:
        raise ValueError("need targets for at least 2 tasks (n x M matrix)")
    M = Y.shape[1]
    cols = []
    for i in range(M):
        rows = slice(None) if mask is None else np.asarray(mask)[:, i] == 1
        cols.append(fit_lasso(X[rows], Y[rows, i], rho2, cfg))
    W = np.column_stack(cols)
    norms = np.linalg.norm(W, axis=0)
    degenerate = norms == 0
    if np.any(degenerate):
        warnings.warn(
            f"tasks {np.where(degenerate)[0].tolist()} have all-zero lasso "
            "coefficients and will join no edge",
            stacklevel=2,
        )
    Wn = W / np.where(degenerate, 1.0, norms)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        corr = np.corrcoef(Wn, rowvar=False)
    corr = np.nan_to_num(corr, nan=0.0)
    edges = [
        (a, b)
        for a in range(M)
        for b in range(a + 1, M)
        if not degenerate[a] and not degenerate[b] and abs(corr[a, b]) >= corr_threshold
    ]
    return structure_from_edges(M, edges)


def predict_scores(
    X_test: np.ndarray, W: WeightMatrix, task: str
) -> np.ndarray:
    """Continuous score estimates X_test @ W_task."""
    X_test = np.asarray(X_test, dtype=float)
    return X_test @ W.column(task)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_weight_matrix(
    wm: WeightMatrix, csv_path, meta_path, hyperparams: Optional[dict] = None
) -> None:
    """Write coefficients as CSV (one column per task) plus a JSON sidecar."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(wm.task_names)
        for row in wm.W:
            w.writerow([f"{v:.17g}" for v in row])
    meta = {"task_names": wm.task_names, "shape": list(wm.W.shape)}
    if hyperparams:
        meta["hyperparams"] = hyperparams
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_weight_matrix(csv_path) -> WeightMatrix:
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    W = np.array([[float(c) for c in row] for row in rows[1:]])
    return WeightMatrix(W=W, task_names=names)


def save_structure_matrix(
    sm: StructureMatrix, csv_path, meta_path, hyperparams: Optional[dict] = None
) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in sm.S:
            w.writerow([f"{v:.17g}" for v in row])
    meta = {
        "edges": [list(e) for e in sm.edges],
        "n_tasks": sm.n_tasks,
    }
    if hyperparams:
        meta["hyperparams"] = hyperparams
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
