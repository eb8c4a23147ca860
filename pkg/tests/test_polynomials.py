import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from polycap.grid import GridFunction, build_grid
from polycap.polynomials import (
    Polynomial, basis_dim, complement_part, degree_part, eval_poly, monomial_exponents, poly_deviation, prime_part,
    project, projection_operator, vandermonde,
)


def test_basis_dimension():
    assert basis_dim(1, 3) == 4
    assert basis_dim(2, 2) == 6
    assert basis_dim(3, 1) == 4
    assert len(monomial_exponents(2, 2)) == 6


def test_vandermonde_values():
    V = vandermonde(np.array([[2.0, 3.0]]), 1)
    np.testing.assert_allclose(V, [[1.0, 2.0, 3.0]])


def _random_poly(dim, deg, seed):
    rng = np.random.default_rng(seed)
    return Polynomial(dim, deg, rng.standard_normal(basis_dim(dim, deg)), (0.5,) * dim)


@given(st.integers(0, 10**6), st.sampled_from([1, 2]), st.integers(0, 2))
def test_projection_reproduces_polynomials(seed, dim, r):
    g = build_grid(dim, 9)
    P = _random_poly(dim, r, seed)
    res = project(eval_poly(P, g), r)
    np.testing.assert_allclose(res.polynomial.coeffs, P.coeffs, atol=1e-9)
    assert max(res.residuals) < 1e-9


@given(st.integers(0, 10**6), st.floats(-3, 3))
def test_projection_linear_and_idempotent(seed, a):
    g = build_grid(2, 9)
    R, E, _ = projection_operator(g, 1)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, g.size))
    np.testing.assert_allclose(R @ (a * u + v), a * (R @ u) + R @ v, atol=1e-10)
    np.testing.assert_allclose(R @ (E @ (R @ u)), R @ u, atol=1e-10)


@given(st.integers(0, 10**6))
def test_degree_decomposition(seed):
    P = _random_poly(2, 3, seed)
    for k in range(4):
        np.testing.assert_allclose((degree_part(P, k) + complement_part(P, k)).coeffs, P.coeffs, atol=1e-14)
    np.testing.assert_allclose((prime_part(P, 2) + degree_part(P, 0)).coeffs, degree_part(P, 2).coeffs, atol=1e-14)


def test_lp_projection_of_polynomial_is_exact():
    g = build_grid(1, 17)
    P = _random_poly(1, 1, 3)
    res = project(eval_poly(P, g), 1, p=1.5)
    np.testing.assert_allclose(res.polynomial.coeffs, P.coeffs, atol=1e-5)


def test_deviation_closed_forms():
    tri = poly_deviation([[0, 0], [1, 0], [0, 1]], 1, "l2")
    assert tri.value == pytest.approx(1 / 3, rel=1e-6)
    assert tri.lower_bound <= tri.value + 1e-12
    sq = poly_deviation([[0, 0], [1, 0], [0, 1], [1, 1]], 1, "l2")
    assert sq.value == pytest.approx(1 / math.sqrt(5), rel=1e-6)
    line = poly_deviation([[0, 0], [0.5, 0], [1, 0]], 1, "l2")
    assert line.value == pytest.approx(0.0, abs=1e-9)


def test_deviation_linf_norm():
    # max(|c0|, |c0 + c1|) with max|c| = 1 is smallest at c = (1/2... ) -> 1/2 is not attainable; c=(t,-2t)
    res = poly_deviation([[0.0], [1.0]], 1, "linf")
    assert res.value == pytest.approx(0.5, rel=1e-8)
    assert res.bound_kind.startswith("exact")


def test_projection_rejects_coarse_grid():
    with pytest.raises(ValueError):
        projection_operator(build_grid(1, 5), 5)
