"""Polynomial spaces, seminorm projections and point-set deviation.

Monomials are centred at the cube centre and ordered graded
lexicographically: by total degree, then descending lexicographic
within a degree.  For ``p = 2`` the projection minimises the squared
ladder ``sum_i c_i**2 ||nabla^i (u - P)||_2**2``, which is a linear map.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .calculus import compact_operator, gradient_seminorm, multi_indices
from .grid import GridCube, GridFunction

__all__ = [
    "Polynomial",
    "ProjectionResult",
    "DeviationResult",
    "basis_dim",
    "monomial_exponents",
    "vandermonde",
    "eval_poly",
    "projection_operator",
    "project",
    "degree_part",
    "complement_part",
    "prime_part",
    "poly_deviation",
]


def basis_dim(dim: int, degree: int) -> int:
    """Dimension ``C(N+k, k)`` of the polynomials of degree at most ``k``."""
    if dim < 1 or degree < 0:
        raise ValueError("need dim >= 1 and degree >= 0")
    return math.comb(dim + degree, degree)


@functools.lru_cache(maxsize=64)
def monomial_exponents(dim: int, degree: int) -> tuple:
    """Exponent tuples of all monomials of degree at most ``degree``."""
    out = []
    for d in range(degree + 1):
        out += multi_indices(dim, d)
    return tuple(out)


def _orders(dim: int, degree: int) -> np.ndarray:
    return np.array([sum(e) for e in monomial_exponents(dim, degree)])


def vandermonde(points: np.ndarray, degree: int, center: Sequence[float] | None = None) -> np.ndarray:
    """Rows of monomial values at ``points`` (shape ``(npts, dim)``)."""
    pts = np.atleast_2d(np.asarray(points, float))
    if center is not None:
        pts = pts - np.asarray(center, float)
    exps = monomial_exponents(pts.shape[1], degree)
    V = np.ones((len(pts), len(exps)))
    for j, e in enumerate(exps):
        for ax, a in enumerate(e):
            if a:
                V[:, j] *= pts[:, ax] ** a
    return V


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Polynomial of degree at most ``degree`` in centred monomials."""

    dim: int
    degree: int
    coeffs: np.ndarray
    center: tuple = field(default=None)

    def __post_init__(self):
        c = np.asarray(self.coeffs, float).ravel().copy()
        if c.size != basis_dim(self.dim, self.degree):
            raise ValueError(f"expected {basis_dim(self.dim, self.degree)} coefficients, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        center = (0.0,) * self.dim if self.center is None else tuple(float(x) for x in self.center)
        object.__setattr__(self, "center", center)

    @property
    def exponents(self) -> tuple:
        return monomial_exponents(self.dim, self.degree)

    def __call__(self, points) -> np.ndarray:
        return vandermonde(points, self.degree, self.center) @ self.coeffs

    def __add__(self, other: "Polynomial") -> "Polynomial":
        _compatible(self, other)
        return Polynomial(self.dim, self.degree, self.coeffs + other.coeffs, self.center)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        _compatible(self, other)
        return Polynomial(self.dim, self.degree, self.coeffs - other.coeffs, self.center)

    def scaled(self, s: float) -> "Polynomial":
        return Polynomial(self.dim, self.degree, s * self.coeffs, self.center)

    def on(self, grid: GridCube) -> "Polynomial":
        """Same coefficients, centred on ``grid``."""
        return Polynomial(self.dim, self.degree, self.coeffs, grid.center)


def _compatible(a: Polynomial, b: Polynomial) -> None:
    if a.dim != b.dim or a.degree != b.degree or not np.allclose(a.center, b.center):
        raise ValueError("polynomials are not compatible")


def eval_poly(P: Polynomial, grid: GridCube) -> GridFunction:
    """Evaluate ``P`` at the nodes, monomials centred at the cube centre."""
    if P.dim != grid.dim:
        raise ValueError("polynomial and grid dimensions differ")
    V = vandermonde(grid.coords, P.degree, grid.center)
    return GridFunction(grid, V @ P.coeffs)


def degree_part(P: Polynomial, k: int) -> Polynomial:
    """Keep monomials of degree at most ``k``."""
    _check_k(P, k)
    keep = _orders(P.dim, P.degree) <= k
    return Polynomial(P.dim, P.degree, np.where(keep, P.coeffs, 0.0), P.center)


def complement_part(P: Polynomial, k: int) -> Polynomial:
    """Keep monomials of degree ``k+1`` up to the degree bound."""
    _check_k(P, k)
    keep = _orders(P.dim, P.degree) > k
    return Polynomial(P.dim, P.degree, np.where(keep, P.coeffs, 0.0), P.center)


def prime_part(P: Polynomial, k: int) -> Polynomial:
    """``degree_part(P, k) - degree_part(P, 0)``."""
    return degree_part(P, k) - degree_part(P, 0)


def _check_k(P: Polynomial, k: int) -> None:
    if not 0 <= k <= P.degree:
        raise ValueError(f"degree split {k} outside 0..{P.degree}")


# ------------------------------------------------------------ projection


def _ladder_weights(r: int, weights) -> np.ndarray:
    if weights is None:
        return np.ones(r + 1)
    w = np.asarray(weights, float).ravel()
    if w.size != r + 1 or np.any(w <= 0):
        raise ValueError("weights must hold r+1 positive entries")
    return w


@functools.lru_cache(maxsize=64)
def _projection_cached(dim: int, n: int, side: float, center: tuple, r: int, wkey: tuple):
    from .grid import GridCube as _G

    grid = _G(dim, n, center, side)
    w = np.asarray(wkey)
    E = vandermonde(grid.coords, r, grid.center)
    d = E.shape[1]
    G = np.zeros((d, d))
    B = np.zeros((d, grid.size))
    for i in range(r + 1):
        for a in multi_indices(dim, i):
            D = compact_operator(grid, a)
            DE = np.asarray(D @ E)
            G += w[i] ** 2 * grid.weight * DE.T @ DE
            B += w[i] ** 2 * grid.weight * np.asarray((D.T @ DE).T)
    cond = float(np.linalg.cond(G))
    if not np.isfinite(cond) or cond > 1e14:
        raise ValueError("singular normal system: grid too coarse for the degree")
    R = np.linalg.solve(G, B)
    R.setflags(write=False)
    E.setflags(write=False)
    return R, E, cond


def projection_operator(grid: GridCube, r: int, weights=None):
    """Linear ``p = 2`` projection.

    Returns ``(R, E, cond)`` where ``R`` maps node values to coefficients,
    ``E`` evaluates coefficients at the nodes and ``cond`` is the
    condition number of the normal matrix.
    """
    w = _ladder_weights(r, weights)
    return _projection_cached(grid.dim, grid.n, grid.side, tuple(grid.center), int(r),
                              tuple(float(x) for x in w))


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """Projection of a grid function with its residual ladder."""

    polynomial: Polynomial
    residuals: tuple
    diagnostics: dict


def project(u: GridFunction, r: int, p: float = 2.0, weights=None, max_iter: int = 200) -> ProjectionResult:
    """Best polynomial approximation of degree ``r`` in the seminorm ladder.

    For ``p = 2`` the squared ladder is minimised exactly; otherwise the
    sum of ``L^p`` seminorms is minimised by a convex solver started from
    the ``p = 2`` solution.
    """
    if not p >= 1:
        raise ValueError("exponent must be at least 1")
    g = u.grid
    R, E, cond = projection_operator(g, r, weights)
    c = R @ u.values
    diag = {"condition": cond, "iterations": 1, "method": "normal-equations"}
    if p != 2:
        c, it = _project_convex(u, r, p, _ladder_weights(r, weights), E, c, max_iter)
        diag.update(iterations=it, method="convex")
    P = Polynomial(g.dim, r, c, g.center)
    res = GridFunction(g, u.values - E @ c)
    ladder = tuple(gradient_seminorm(res, i, p).value for i in range(r + 1))
    return ProjectionResult(P, ladder, diag)


def _project_convex(u, r, p, w, E, c0, max_iter):
    import cvxpy as cp

    g = u.grid
    c = cp.Variable(E.shape[1])
    c.value = c0
    terms = []
    for i in range(r + 1):
        for a in multi_indices(g.dim, i):
            D = compact_operator(g, a)
            DE = np.asarray(D @ E)
            terms.append(w[i] * g.weight ** (1 / p) * cp.norm(D @ u.values - DE @ c, p))
    prob = cp.Problem(cp.Minimize(cp.sum(cp.hstack(terms))))
    prob.solve(solver="CLARABEL", max_iter=max_iter)
    if c.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"projection solver did not converge: {prob.status}")
    return np.asarray(c.value), int(prob.solver_stats.num_iters or 0)


# ------------------------------------------------------------- deviation


@dataclass(frozen=True)
class DeviationResult:
    """Minimal sup-deviation over unit-norm polynomials."""

    value: float
    lower_bound: float
    coefficients: tuple
    bound_kind: str


def poly_deviation(points, k: int, norm: str = "l2", starts: int = 32, seed: int = 0,
                   center: Sequence[float] | None = None) -> DeviationResult:
    """``min_{|c| = 1} max_i |P_c(x_i)|`` over polynomials of degree ``k``.

    ``norm="linf"`` is solved exactly by one linear program per face of
    the coefficient cube.  ``norm="l2"`` linearises the sphere constraint
    around seeded starts and iterates linear programs; the reported
    value is attained (an upper bound) and ``sigma_min(V)/sqrt(npts)`` is
    returned as a lower bound.
    """
    pts = np.atleast_2d(np.asarray(points, float))
    if pts.size == 0:
        raise ValueError("empty point list")
    # duplicates and ordering do not change the value
    pts = np.unique(pts, axis=0)
    V = vandermonde(pts, k, center)
    npts, d = V.shape
    sig = np.linalg.svd(V, compute_uv=False)
    smin = float(sig[-1]) if npts >= d else 0.0
    lower = smin / math.sqrt(npts)
    if norm == "linf":
        best, arg = np.inf, None
        for j in range(d):
            for s in (1.0, -1.0):
                val, c = _face_lp(V, j, s)
                if val < best - 1e-15:
                    best, arg = val, c
        return DeviationResult(float(best), float(best), tuple(arg), "exact")
    if norm != "l2":
        raise ValueError(f"unknown norm {norm!r}")
    rng = np.random.default_rng(seed)
    cands = [np.eye(d)[j] for j in range(d)]
    if npts >= 1:
        _, _, Vt = np.linalg.svd(V, full_matrices=True)
        cands.append(Vt[-1])
    cands += list(rng.standard_normal((starts, d)))
    best, arg = np.inf, None
    for c in cands:
        c = c / np.linalg.norm(c)
        c, val = _sphere_lp(V, c)
        if val < best:
            best, arg = val, c
    return DeviationResult(float(best), float(min(lower, best)), tuple(arg), "upper-bound")


def _face_lp(V: np.ndarray, j: int, s: float):
    npts, d = V.shape
    # variables (c, t); minimise t with |V c| <= t, |c| <= 1, c_j = s
    cost = np.zeros(d + 1)
    cost[-1] = 1
    A = np.vstack([np.hstack([V, -np.ones((npts, 1))]), np.hstack([-V, -np.ones((npts, 1))])])
    b = np.zeros(2 * npts)
    bounds = [(-1, 1)] * d + [(0, None)]
    bounds[j] = (s, s)
    res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    return float(res.x[-1]), res.x[:d]


def _sphere_lp(V: np.ndarray, c: np.ndarray, iters: int = 50):
    """Iterate ``min |V x|_inf`` s.t. ``c . x >= 1``, renormalising."""
    npts, d = V.shape
    val = float(np.max(np.abs(V @ c)))
    for _ in range(iters):
        cost = np.zeros(d + 1)
        cost[-1] = 1
        A = np.vstack([
            np.hstack([V, -np.ones((npts, 1))]),
            np.hstack([-V, -np.ones((npts, 1))]),
            np.hstack([-c, [0.0]])[None, :],
        ])
        b = np.concatenate([np.zeros(2 * npts), [-1.0]])
        bounds = [(-2, 2)] * d + [(0, None)]
        res = linprog(cost, A_ub=A, b_ub=b, bounds=bounds, method="highs")
        if res.status != 0:
            break
        x = res.x[:d]
        nx = np.linalg.norm(x)
        x = x / nx
        new = float(np.max(np.abs(V @ x)))
        if new >= val - 1e-13:
            break
        c, val = x, new
    return c, val
