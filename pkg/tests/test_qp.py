import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from rmtrfrac.qp import RegularizationWarning, active_set_qp, cauchy_point, model, projected_cg


def _spd(rng, n, cond=50.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    return Q @ np.diag(np.geomspace(1.0, cond, n)) @ Q.T


def _pg_oracle(g, H, lo, hi, iters=200_000):
    # long projected-gradient run with step 1/L
    L = np.linalg.eigvalsh(H).max()
    s = np.clip(np.zeros_like(g), lo, hi)
    for _ in range(iters):
        s_new = np.clip(s - (g + H @ s) / L, lo, hi)
        if np.abs(s_new - s).max() < 1e-15:
            break
        s = s_new
    return s


@pytest.mark.parametrize("solver", [projected_cg, active_set_qp])
def test_zero_gradient_gives_zero_step(solver):
    s = solver(np.zeros(3), np.eye(3), -np.ones(3), np.ones(3))
    assert np.array_equal(s, np.zeros(3))


@pytest.mark.parametrize("solver", [projected_cg, active_set_qp])
def test_identity_newton_point(solver):
    n = 4
    s = solver(-np.ones(n), sp.identity(n, format="csr"), -10 * np.ones(n), 10 * np.ones(n))
    assert np.allclose(s, np.ones(n), atol=1e-12)


def test_clipped_corner_matches_grid_search():
    g = np.array([-3.0, -3.0])
    H = np.eye(2)
    grid = np.linspace(-1, 1, 2001)
    X, Y = np.meshgrid(grid, grid)
    m = g[0] * X + g[1] * Y + 0.5 * (X**2 + Y**2)
    i = np.unravel_index(np.argmin(m), m.shape)
    ref = np.array([X[i], Y[i]])
    for solver in (projected_cg, active_set_qp):
        s = solver(g, H, -np.ones(2), np.ones(2))
        assert np.allclose(s, ref, atol=1e-3)
        assert np.allclose(s, [1.0, 1.0])


def test_one_variable_active_lower_bound():
    s = active_set_qp(np.array([2.0]), np.array([[1.0]]), np.array([0.0]), np.array([np.inf]))
    assert s[0] == 0.0


def test_exact_newton_step_inactive_bounds(rng):
    H = _spd(rng, 6)
    g = rng.normal(size=6)
    s = active_set_qp(g, H, -1e6 * np.ones(6), 1e6 * np.ones(6))
    assert np.allclose(s, np.linalg.solve(H, -g), atol=1e-10)


def test_random_box_qp_matches_projected_gradient(rng):
    for _ in range(5):
        n = 10
        H = _spd(rng, n, cond=20.0)
        g = rng.normal(size=n) * 3
        lo, hi = -rng.uniform(0.05, 1.0, n), rng.uniform(0.05, 1.0, n)
        s, info = active_set_qp(g, H, lo, hi, return_info=True)
        assert info.converged
        assert np.abs(s - _pg_oracle(g, H, lo, hi)).max() < 1e-8


@settings(max_examples=60)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 12))
def test_steps_feasible_and_decreasing(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    H = A + A.T  # indefinite in general
    g = rng.normal(size=n)
    lo, hi = -rng.uniform(0, 2, n), rng.uniform(0, 2, n)
    for solver in (projected_cg, active_set_qp):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RegularizationWarning)
            s = solver(g, H, lo, hi)
        assert np.all(s >= lo - 1e-14) and np.all(s <= hi + 1e-14)
        assert model(g, H, s) <= 1e-14


def test_cauchy_point_decreases(rng):
    H = _spd(rng, 5)
    g = rng.normal(size=5)
    lo, hi = -0.1 * np.ones(5), 0.1 * np.ones(5)
    s = cauchy_point(g, H, lo, hi)
    assert model(g, H, s) < 0
    assert np.all(s >= lo) and np.all(s <= hi)


def test_pcg_no_worse_than_cauchy(rng):
    H = _spd(rng, 30, cond=1e3)
    g = rng.normal(size=30)
    lo, hi = -0.3 * np.ones(30), 0.3 * np.ones(30)
    assert model(g, H, projected_cg(g, H, lo, hi, max_iter=10)) <= model(g, H, cauchy_point(g, H, lo, hi)) + 1e-14


def test_singular_reduced_system_is_regularized():
    H = np.zeros((2, 2))
    g = np.array([0.0, 1e-20])
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        s, info = active_set_qp(g, H, -np.ones(2), np.ones(2), return_info=True)
    assert np.all(np.isfinite(s))
    assert info.regularized
    assert any(issubclass(w.category, RegularizationWarning) for w in rec)


def test_negative_curvature_reaches_boundary():
    H = -np.eye(2)
    g = np.array([1e-3, 0.0])
    s = projected_cg(g, H, -np.ones(2), np.ones(2))
    assert s[0] == -1.0
