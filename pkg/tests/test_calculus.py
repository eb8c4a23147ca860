import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polycap.calculus import (
    compact_operator, energy_matrix, fd_weights, gradient_energy, gradient_seminorm, multi_indices,
    partial_derivative, sobolev_norm,
)
from polycap.grid import GridFunction, build_grid, build_mask


def test_fd_weights_classic_stencils():
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1], atol=1e-12)
    np.testing.assert_allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5], atol=1e-12)
    np.testing.assert_allclose(fd_weights([0, 1], 1), [-1, 1], atol=1e-12)


@pytest.mark.parametrize("dim,order", [(1, 3), (2, 2), (3, 2), (2, 0)])
def test_multi_index_count(dim, order):
    idx = multi_indices(dim, order)
    assert len(idx) == math.comb(dim + order - 1, order)
    assert all(sum(a) == order for a in idx)


def test_compact_difference_exact_on_monomials():
    g = build_grid(2, 9)
    x, y = g.coords.T
    D = compact_operator(g, (1, 1))
    np.testing.assert_allclose(D @ (x * y), 1.0, atol=1e-12)
    D = compact_operator(g, (2, 0))
    np.testing.assert_allclose(D @ (x**2), 2.0, atol=1e-10)
    assert D.shape == ((9 - 2) * 9, 81)


def test_node_derivative_second_order():
    g = build_grid(1, 33)
    u = GridFunction(g, np.sin(g.coords[:, 0]))
    du = partial_derivative(u, (1,))
    np.testing.assert_allclose(du.values, np.cos(g.coords[:, 0]), atol=5e-3)


def test_gradient_energy_of_linear_function():
    g = build_grid(2, 17)
    u = GridFunction(g, 3 * g.coords[:, 0] - g.coords[:, 1])
    # staggered samples: 16 x 17 per direction with weight h^2
    assert gradient_energy(u, 1) == pytest.approx(10.0 * 16 * 17 / 256, rel=1e-12)
    assert gradient_energy(u, 1) == pytest.approx(10.0, rel=0.07)
    assert gradient_energy(u, 2) == pytest.approx(0.0, abs=1e-20)


def test_seminorm_of_quadratic():
    g = build_grid(1, 65)
    u = GridFunction(g, g.coords[:, 0] ** 2)
    assert gradient_seminorm(u, 2).value == pytest.approx(2.0 * math.sqrt(63 / 64), rel=1e-12)
    assert gradient_seminorm(u, 1).value == pytest.approx(2 / math.sqrt(3), rel=1e-3)
    assert sobolev_norm(u, 2) == pytest.approx(1 / math.sqrt(5) + 2 / math.sqrt(3) + 2, rel=1e-2)


def test_seminorm_region_restricts_terms():
    g = build_grid(1, 17)
    u = GridFunction(g, g.coords[:, 0])
    left = build_mask(g, {"type": "box", "lo": [0.0], "hi": [0.5]})
    assert gradient_energy(u, 1, left) == pytest.approx(0.5)


@given(st.integers(0, 2**32 - 1), st.integers(0, 2), st.sampled_from([1, 2]))
def test_energy_matrix_matches_energy(seed, k, dim):
    g = build_grid(dim, 9)
    v = np.random.default_rng(seed).standard_normal(g.size)
    A = energy_matrix(g, k)
    assert abs(A - A.T).max() < 1e-12
    e = float(v @ (A @ v))
    assert e >= -1e-12
    assert e == pytest.approx(gradient_energy(GridFunction(g, v), k), rel=1e-10)


@given(st.integers(0, 2**32 - 1), st.floats(1.0, 4.0))
def test_seminorm_is_homogeneous_and_subadditive(seed, p):
    g = build_grid(2, 9)
    rng = np.random.default_rng(seed)
    u, v = (GridFunction(g, rng.standard_normal(g.size)) for _ in range(2))
    nu = gradient_seminorm(u, 1, p).value
    assert gradient_seminorm(GridFunction(g, -2.5 * u.values), 1, p).value == pytest.approx(2.5 * nu)
    nsum = gradient_seminorm(GridFunction(g, u.values + v.values), 1, p).value
    assert nsum <= nu + gradient_seminorm(v, 1, p).value + 1e-9
