import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, strategies as st

from polycap.calculus import energy_matrix
from polycap.grid import build_grid
from polycap.solvers import constrained_quadratic, obstacle_active_set, pinned_minimizer, sup_quotient


def test_pinned_minimizer_is_linear_interpolation():
    g = build_grid(1, 11)
    A = energy_matrix(g, 1)
    u = pinned_minimizer(A, np.array([0, 10]), np.array([0.0, 1.0]))
    np.testing.assert_allclose(np.ravel(u), g.coords[:, 0], atol=1e-12)


def test_pinned_minimizer_several_rhs():
    g = build_grid(1, 9)
    U = pinned_minimizer(energy_matrix(g, 1), np.array([0, 8]), np.array([[0.0, 1.0], [2.0, 1.0]]))
    assert U.shape == (9, 2)
    np.testing.assert_allclose(U[:, 1], 1.0, atol=1e-12)


def test_constrained_quadratic_mean_constraint():
    g = build_grid(1, 9)
    A = energy_matrix(g, 1)
    C = np.ones((1, 9)) / 9
    u, ok = constrained_quadratic(A, np.array([0]), np.array([0.0]), C, np.array([0.5]))
    assert ok
    assert C @ u == pytest.approx(0.5)
    assert u[0] == 0.0


def test_constrained_quadratic_detects_inconsistency():
    g = build_grid(1, 9)
    A = energy_matrix(g, 1)
    C = np.zeros((1, 9))
    C[0, 0] = 1.0
    _, ok = constrained_quadratic(A, np.array([0]), np.array([0.0]), C, np.array([1.0]))
    assert not ok


def test_obstacle_tent():
    g = build_grid(1, 21)
    A = energy_matrix(g, 1)
    u, _, ok = obstacle_active_set(A, np.array([0, 20]), np.array([10]))
    assert ok
    np.testing.assert_allclose(u, 1 - np.abs(g.coords[:, 0] - 0.5) / 0.5, atol=1e-12)


def test_obstacle_inactive_constraint_released():
    g = build_grid(1, 21)
    A = energy_matrix(g, 1)
    u, _, ok = obstacle_active_set(A, np.array([0, 20]), np.array([8, 10, 12]))
    assert ok and np.all(u[[8, 10, 12]] >= 1 - 1e-12)
    assert float(u @ (A @ u)) <= 2 / 0.4 + 1e-9


@given(st.integers(0, 10**6))
def test_sup_quotient_matches_generalized_eigenvalue(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((6, 6))
    A = X @ X.T + 0.1 * np.eye(6)
    Y = rng.standard_normal((6, 6))
    S = Y @ Y.T
    t, x = sup_quotient(S, A)
    assert t == pytest.approx(sla.eigh(S, A, eigvals_only=True)[-1], rel=1e-8)
    assert float(x @ S @ x) / float(x @ A @ x) == pytest.approx(t, rel=1e-8)


def test_sup_quotient_infinite_on_kernel():
    A = np.diag([1.0, 0.0])
    S = np.eye(2)
    t, _ = sup_quotient(S, A)
    assert t == np.inf
    t, _ = sup_quotient(np.diag([1.0, -1.0]), A)
    assert t == pytest.approx(1.0)
