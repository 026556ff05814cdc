"""Accelerated proximal gradient solver for composite objectives F(W) = f(W) + g(W).

f is smooth with an available gradient, g is convex but possibly non-smooth and
enters only through its proximal operator.  The solver is a monotone FISTA
variant with backtracking line search: the momentum sequence is the classic
t_{m+1} = (1 + sqrt(1 + 4 t_m^2)) / 2, the best iterate seen so far is kept,
and momentum restarts whenever an accelerated step would increase the
objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np


def prox_l1(W: np.ndarray, threshold: float) -> np.ndarray:
    """Elementwise soft-thresholding: sign(w) * max(|w| - threshold, 0).

    This is the proximal operator of threshold * ||.||_1; threshold 0 is the
    identity.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ValueError("prox_l1: input contains non-finite entries")
    return np.sign(W) * np.maximum(np.abs(W) - threshold, 0.0)


def prox_nuclear(W: np.ndarray, threshold: float) -> np.ndarray:
    """Singular value thresholding: U diag(max(sigma - threshold, 0)) V^T.

    Proximal operator of threshold * ||.||_* (sum of singular values).  The SVD
    sign ambiguity is resolved deterministically: the first nonzero component
    of each left singular vector is made non-negative.  Threshold 0 returns W
    unchanged.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"prox_nuclear expects a 2-D matrix, got shape {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ValueError("prox_nuclear: input contains non-finite entries")
    if threshold == 0:
        return W.copy()
    U, s, Vt = np.linalg.svd(W, full_matrices=False)
    U, Vt = _fix_svd_signs(U, Vt)
    s = np.maximum(s - threshold, 0.0)
    return (U * s) @ Vt


def nuclear_norm(W: np.ndarray) -> float:
    """Sum of singular values of W."""
    return float(np.linalg.svd(np.asarray(W, dtype=float), compute_uv=False).sum())


def _fix_svd_signs(U: np.ndarray, Vt: np.ndarray):
    # Make the first nonzero component of each left singular vector >= 0 so
    # repeated factorizations of the same matrix agree bit-for-bit.
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.nonzero(np.abs(col) > 1e-14)[0]
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            Vt[j, :] = -Vt[j, :]
    return U, Vt


@dataclass
class SmoothObjective:
    """Differentiable part of a composite objective.

    value(W) returns a scalar, gradient(W) an array of W's shape.  The
    gradient contract (agreement with central finite differences) is checked
    by `check_gradient`.
    """

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


@dataclass
class ProxTerm:
    """Non-smooth part g, represented by its value and proximal operator.

    prox(W, step) must solve argmin_Z  (1 / (2 step)) ||Z - W||_F^2 + g(Z).
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[np.ndarray, float], np.ndarray]


ZERO_PROX = ProxTerm(value=lambda W: 0.0, prox=lambda W, step: W)


@dataclass
class OptimizerConfig:
    max_iters: int = 1000
    tol: float = 1e-6
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.initial_step <= 0:
            raise ValueError(f"initial_step must be > 0, got {self.initial_step}")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError(
                f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}"
            )


@dataclass
class SolveReport:
    final_W: np.ndarray
    objective_trace: List[float] = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False


def solve_apg(
    f: SmoothObjective,
    g: ProxTerm | None,
    W0: np.ndarray,
    cfg: OptimizerConfig | None = None,
) -> SolveReport:
    """Minimize f(W) + g(W) by monotone accelerated proximal gradient.

    Each iteration takes a momentum search point, backtracks the step size
    until the quadratic upper-bound test holds, and applies g's prox.  If the
    accelerated candidate would raise the objective, momentum is reset and the
    next step starts from the best iterate; the recorded objective trace is
    therefore non-increasing and its minimum is attained at the returned W.

    Stops when the relative objective change drops below cfg.tol or after
    cfg.max_iters iterations.
    """
    if g is None:
        g = ZERO_PROX
    if cfg is None:
        cfg = OptimizerConfig()

    W = np.asarray(W0, dtype=float).copy()
    Y = W.copy()
    t = 1.0
    step = cfg.initial_step

    F_W = float(f.value(W)) + float(g.value(W))
    if not np.isfinite(F_W):
        raise RuntimeError("non-finite objective at iteration 0 (initial point)")
    trace = [F_W]

    converged = False
    iterations = 0
    for m in range(1, cfg.max_iters + 1):
        iterations = m
        grad_Y = f.gradient(Y)
        f_Y = float(f.value(Y))

        # Backtracking: shrink the step until the quadratic upper bound at Y
        # majorizes f at the prox candidate.
        while True:
            Z = g.prox(Y - step * grad_Y, step)
            f_Z = float(f.value(Z))
            diff = Z - Y
            bound = f_Y + float(np.sum(grad_Y * diff)) + float(
                np.sum(diff * diff)
            ) / (2.0 * step)
            if f_Z <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            step *= cfg.backtrack_factor
            if step < 1e-20:
                raise RuntimeError(
                    f"backtracking underflow at iteration {m}; "
                    "gradient is likely inconsistent with the objective"
                )

        F_Z = f_Z + float(g.value(Z))
        if not np.isfinite(F_Z):
            raise RuntimeError(f"non-finite objective at iteration {m}")

        if F_Z > F_W:
            # Momentum overshoot: keep the best iterate, restart acceleration.
            t = 1.0
            Y = W.copy()
            trace.append(F_W)
            continue

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = Z + ((t - 1.0) / t_next) * (Z - W)
        W = Z
        t = t_next

        F_prev = F_W
        F_W = F_Z
        trace.append(F_W)
        if abs(F_W - F_prev) / max(1.0, abs(F_prev)) < cfg.tol:
            converged = True
            break

    return SolveReport(
        final_W=W,
        objective_trace=trace,
        iterations_used=iterations,
        converged=converged,
    )


def check_gradient(
    f: SmoothObjective,
    W: np.ndarray,
    rel_tol: float = 1e-5,
    eps: float = 1e-6,
) -> float:
    """Compare f.gradient(W) with central finite differences of f.value.

    Returns the worst relative error over all entries and raises AssertionError
    when it exceeds rel_tol.  Used to enforce the SmoothObjective contract.
    """
    W = np.asarray(W, dtype=float)
    grad = np.asarray(f.gradient(W), dtype=float)
    num = np.empty_like(grad)
    it = np.nditer(W, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        Wp = W.copy()
        Wm = W.copy()
        h = eps * max(1.0, abs(W[idx]))
        Wp[idx] += h
        Wm[idx] -= h
        num[idx] = (f.value(Wp) - f.value(Wm)) / (2.0 * h)
        it.iternext()
    scale = max(1.0, float(np.abs(num).max()))
    worst = float(np.abs(grad - num).max() / scale)
    if worst > rel_tol:
        raise AssertionError(
            f"gradient check failed: max relative error {worst:.3e} > {rel_tol:.1e}"
        )
    return worst
