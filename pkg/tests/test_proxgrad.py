import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskstrat.proxgrad import (
    OptimizerConfig,
    ProxTerm,
    SmoothObjective,
    check_gradient,
    prox_l1,
    prox_nuclear,
    solve_apg,
)
from tests.oracles import ista_lasso, prox_l1_oracle, prox_nuclear_oracle

rng = np.random.default_rng(20240)


# ---------------------------------------------------------------------------
# prox_l1
# ---------------------------------------------------------------------------


def test_prox_l1_zero_fixed_point():
    assert np.array_equal(prox_l1(np.zeros(4), 1.0), np.zeros(4))


def test_prox_l1_closed_form():
    assert np.allclose(prox_l1(np.array([3.0, -0.5]), 1.0), [2.0, 0.0])


def test_prox_l1_matches_numeric_oracle():
    w = rng.normal(size=5)
    got = prox_l1(w, 0.3)
    want = prox_l1_oracle(w, 0.3)
    assert np.abs(got - want).max() < 1e-6


def test_prox_l1_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        prox_l1(np.array([1.0, np.nan]), 0.5)


def test_prox_l1_rejects_negative_threshold():
    with pytest.raises(ValueError):
        prox_l1(np.ones(2), -0.1)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.lists(st.floats(-50, 50), min_size=1, max_size=6),
    st.floats(0.01, 5.0),
)
def test_prox_l1_contraction(a, b, lam):
    n = min(len(a), len(b))
    a = np.array(a[:n])
    b = np.array(b[:n])
    pa, pb = prox_l1(a, lam), prox_l1(b, lam)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


# ---------------------------------------------------------------------------
# prox_nuclear
# ---------------------------------------------------------------------------


def test_prox_nuclear_diagonal():
    out = prox_nuclear(np.diag([3.0, 1.0]), 2.0)
    assert np.allclose(out, np.diag([1.0, 0.0]), atol=1e-12)


def test_prox_nuclear_zero_threshold_identity():
    W = rng.normal(size=(3, 4))
    assert np.array_equal(prox_nuclear(W, 0.0), W)


def test_prox_nuclear_matches_numeric_oracle():
    W = rng.normal(size=(3, 2))
    got = prox_nuclear(W, 0.5)
    want = prox_nuclear_oracle(W, 0.5)
    assert np.abs(got - want).max() < 1e-5


def test_prox_nuclear_shrinks_singular_values():
    W = rng.normal(size=(5, 4))
    lam = 0.7
    out = prox_nuclear(W, lam)
    s_in = np.linalg.svd(W, compute_uv=False)
    s_out = np.linalg.svd(out, compute_uv=False)
    want = np.maximum(s_in - lam, 0.0)
    assert np.abs(np.sort(s_out)[::-1] - want).max() < 1e-8
    assert np.linalg.matrix_rank(out, tol=1e-10) <= np.linalg.matrix_rank(W)


def test_prox_nuclear_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        prox_nuclear(np.array([[np.inf, 0.0], [0.0, 1.0]]), 0.5)


def test_prox_nuclear_deterministic():
    W = rng.normal(size=(4, 3))
    assert np.array_equal(prox_nuclear(W, 0.3), prox_nuclear(W, 0.3))


# ---------------------------------------------------------------------------
# solve_apg
# ---------------------------------------------------------------------------


def _quadratic_to(A):
    return SmoothObjective(
        value=lambda W: 0.5 * float(np.sum((W - A) ** 2)),
        gradient=lambda W: W - A,
    )


def test_solve_quadratic_reaches_minimizer():
    A = rng.normal(size=(6, 3))
    rep = solve_apg(_quadratic_to(A), None, np.zeros((6, 3)),
                    OptimizerConfig(max_iters=500, tol=1e-14))
    assert rep.converged
    assert np.abs(rep.final_W - A).max() < 1e-8


def test_solve_trace_is_monotone_and_consistent():
    A = rng.normal(size=(5, 2))
    rep = solve_apg(_quadratic_to(A), None, np.ones((5, 2)),
                    OptimizerConfig(max_iters=300, tol=1e-12))
    trace = np.array(rep.objective_trace)
    assert np.all(np.diff(trace) <= 1e-12)
    f_final = _quadratic_to(A).value(rep.final_W)
    assert abs(min(trace) - f_final) < 1e-10


def _lasso_parts(X, y, rho2):
    f = SmoothObjective(
        value=lambda w: float(np.sum((X @ w - y) ** 2)),
        gradient=lambda w: 2.0 * (X.T @ (X @ w - y)),
    )
    g = ProxTerm(
        value=lambda w: rho2 * float(np.abs(w).sum()),
        prox=lambda w, step: prox_l1(w, rho2 * step),
    )
    return f, g


def test_solve_lasso_matches_long_ista():
    X = rng.normal(size=(10, 5))
    y = rng.normal(size=10)
    rho2 = 0.1
    f, g = _lasso_parts(X, y, rho2)
    rep = solve_apg(f, g, np.zeros(5), OptimizerConfig(max_iters=5000, tol=1e-14))
    _, trace = ista_lasso(X, y, rho2, n_iters=100_000)
    ref = trace[-1]
    got = rep.objective_trace[-1]
    assert abs(got - ref) / max(1.0, abs(ref)) < 1e-6


def test_fista_beats_ista_at_fixed_budget():
    X = rng.normal(size=(10, 5))
    y = rng.normal(size=10)
    rho2 = 0.1
    f, g = _lasso_parts(X, y, rho2)
    budget = 200
    rep = solve_apg(f, g, np.zeros(5), OptimizerConfig(max_iters=budget, tol=1e-16))
    _, ista_trace = ista_lasso(X, y, rho2, n_iters=budget)
    assert rep.objective_trace[-1] <= ista_trace[-1] + 1e-12


def test_strongly_convex_gradient_norm():
    d = 8
    M = rng.normal(size=(d, d))
    H = M @ M.T + np.eye(d)
    b = rng.normal(size=d)
    f = SmoothObjective(
        value=lambda w: 0.5 * float(w @ H @ w) - float(b @ w),
        gradient=lambda w: H @ w - b,
    )
    rep = solve_apg(f, None, np.zeros(d), OptimizerConfig(max_iters=500, tol=1e-16))
    assert np.linalg.norm(f.gradient(rep.final_W)) < 1e-6


def test_solve_rejects_nonfinite_objective():
    f = SmoothObjective(value=lambda w: float("nan"), gradient=lambda w: w)
    with pytest.raises(RuntimeError, match="non-finite objective"):
        solve_apg(f, None, np.zeros(3), OptimizerConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(max_iters=0)
    with pytest.raises(ValueError):
        OptimizerConfig(tol=0.0)
    with pytest.raises(ValueError):
        OptimizerConfig(backtrack_factor=1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(initial_step=-1.0)


def test_check_gradient_catches_bad_gradient():
    f = SmoothObjective(
        value=lambda w: float(np.sum(w**2)),
        gradient=lambda w: w,  # wrong by factor 2
    )
    with pytest.raises(AssertionError):
        check_gradient(f, rng.normal(size=4))
