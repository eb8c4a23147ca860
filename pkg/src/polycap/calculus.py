"""Finite-difference derivatives, gradient seminorms and Sobolev norms.

Two families of difference operators are provided.

* Node derivatives (:func:`partial_derivative`) return values at every
  node: second-order central stencils in the interior, one-sided
  stencils of matching order in the boundary layers.
* Compact differences (:func:`compact_operator`) are the plain forward
  differences ``Delta^alpha u / h^|alpha|`` sampled on the staggered
  lattice of shape ``n - alpha_i``.  They are central about their sample
  points, exact on polynomials of degree ``|alpha|`` and free of the
  odd/even decoupling of wide central stencils, so all seminorms,
  energies and variational problems use them.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .grid import CompactMask, GridCube, GridFunction

__all__ = [
    "multi_indices",
    "fd_weights",
    "partial_derivative",
    "compact_operator",
    "compact_region_rows",
    "energy_matrix",
    "gradient_energy",
    "gradient_seminorm",
    "sobolev_norm",
    "SeminormReport",
]


def multi_indices(dim: int, order: int) -> list:
    """All multi-indices of the given order, in descending lexicographic order."""
    out = [a for a in itertools.product(range(order + 1), repeat=dim) if sum(a) == order]
    return sorted(out, reverse=True)


def fd_weights(offsets: Sequence[int], order: int) -> np.ndarray:
    """Finite-difference weights at integer ``offsets`` for unit spacing.

    Solves the moment conditions ``sum_j w_j o_j**q = q! [q == order]``.
    """
    o = np.asarray(offsets, dtype=float)
    V = np.vander(o, increasing=True).T
    rhs = np.zeros(len(o))
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


@functools.lru_cache(maxsize=64)
def _node_matrix_1d(n: int, order: int) -> sp.csr_matrix:
    """Node-valued derivative of given order for unit spacing."""
    if order == 0:
        return sp.identity(n, format="csr")
    half = (order + 1) // 2
    width = order + 2
    if n < width or 2 * half + 1 > n:
        raise ValueError(f"stencil of order {order} does not fit on {n} nodes")
    rows, cols, vals = [], [], []
    central = fd_weights(range(-half, half + 1), order)
    for i in range(n):
        if i - half >= 0 and i + half <= n - 1:
            offs, w = np.arange(-half, half + 1), central
        elif i - half < 0:
            offs = np.arange(-i, width - i)
            w = fd_weights(offs, order)
        else:
            offs = np.arange(n - 1 - i - width + 1, n - i)
            w = fd_weights(offs, order)
        rows += [i] * len(offs)
        cols += list(i + offs)
        vals += list(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@functools.lru_cache(maxsize=64)
def _forward_matrix_1d(n: int, order: int) -> sp.csr_matrix:
    """Forward difference ``Delta^order`` for unit spacing, shape (n-order, n)."""
    if order >= n:
        raise ValueError(f"difference of order {order} does not fit on {n} nodes")
    D = sp.identity(n, format="csr")
    for j in range(order):
        size = n - j
        step = sp.diags([-np.ones(size - 1), np.ones(size - 1)], [0, 1], shape=(size - 1, size))
        D = step @ D
    return D.tocsr()


def _kron_all(mats) -> sp.csr_matrix:
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return sp.csr_matrix(out)


def _check_alpha(grid: GridCube, alpha) -> tuple:
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != grid.dim:
        raise ValueError("multi-index length must equal the grid dimension")
    if any(a < 0 for a in alpha):
        raise ValueError("multi-index entries must be nonnegative")
    return alpha


def partial_derivative(u: GridFunction, alpha: Sequence[int]) -> GridFunction:
    """Node-valued partial derivative ``D^alpha u``.

    Raises
    ------
    ValueError
        If some ``alpha_i`` exceeds ``(n-1)/2`` or the boundary stencil
        does not fit.
    """
    g = u.grid
    alpha = _check_alpha(g, alpha)
    if any(a > (g.n - 1) // 2 for a in alpha):
        raise ValueError("grid too coarse for the requested derivative")
    mats = [_node_matrix_1d(g.n, a) / g.h**a for a in alpha]
    return GridFunction(g, _kron_all(mats) @ u.values)


@functools.lru_cache(maxsize=256)
def _compact(dim: int, n: int, h: float, alpha: tuple) -> sp.csr_matrix:
    mats = [_forward_matrix_1d(n, a) / h**a for a in alpha]
    M = _kron_all(mats)
    M.sort_indices()
    return M


def compact_operator(grid: GridCube, alpha: Sequence[int]) -> sp.csr_matrix:
    """Compact difference ``Delta^alpha / h^|alpha|`` as a sparse matrix."""
    alpha = _check_alpha(grid, alpha)
    return _compact(grid.dim, grid.n, grid.h, alpha)


def compact_region_rows(grid: GridCube, alpha: Sequence[int], region: CompactMask | None) -> np.ndarray | None:
    """Rows of the compact operator whose stencil lies inside ``region``.

    Returns ``None`` for the whole grid.
    """
    if region is None:
        return None
    alpha = _check_alpha(grid, alpha)
    R = np.asarray(region.flags).reshape(grid.shape)
    keep = np.ones(tuple(grid.n - a for a in alpha), dtype=bool)
    for beta in itertools.product(*[range(a + 1) for a in alpha]):
        sl = tuple(slice(b, b + grid.n - a) for a, b in zip(alpha, beta))
        keep &= R[sl]
    return np.flatnonzero(keep.ravel())


def _region_check(grid: GridCube, region: CompactMask | None) -> None:
    if region is not None and not region.grid.same_as(grid):
        raise ValueError("region lives on a different grid")


@functools.lru_cache(maxsize=128)
def _energy(dim: int, n: int, h: float, k: int) -> sp.csr_matrix:
    w = h**dim
    if k == 0:
        return sp.identity(n**dim, format="csr") * w
    A = None
    for a in multi_indices(dim, k):
        D = _compact(dim, n, h, a)
        term = (D.T @ D) * w
        A = term if A is None else A + term
    return A.tocsr()


def energy_matrix(grid: GridCube, k: int, region: CompactMask | None = None) -> sp.csr_matrix:
    """Matrix of the quadratic form ``sum_{|alpha|=k} ||D^alpha u||_2^2``."""
    _region_check(grid, region)
    if region is None:
        return _energy(grid.dim, grid.n, grid.h, int(k))
    A = None
    for a in multi_indices(grid.dim, k):
        D = compact_operator(grid, a)[compact_region_rows(grid, a, region)]
        term = (D.T @ D) * grid.weight
        A = term if A is None else A + term
    return A.tocsr()


def gradient_energy(u: GridFunction, k: int, region: CompactMask | None = None) -> float:
    """Quadratic energy ``sum_{|alpha|=k} ||D^alpha u||_{L^2}^2``."""
    return float(sum(v**2 for v in _alpha_norms(u, k, 2.0, region)))


def _alpha_norms(u: GridFunction, k: int, p: float, region: CompactMask | None) -> list:
    g = u.grid
    _region_check(g, region)
    if k < 0:
        raise ValueError("order must be nonnegative")
    out = []
    for a in multi_indices(g.dim, k):
        d = compact_operator(g, a) @ u.values
        rows = compact_region_rows(g, a, region)
        if rows is not None:
            d = d[rows]
        out.append(float((g.weight * np.sum(np.abs(d) ** p)) ** (1.0 / p)))
    return out


@dataclass(frozen=True)
class SeminormReport:
    """Value of ``||nabla^k u||_{L^p}`` over a region."""

    order: int
    p: float
    region: str
    value: float


def gradient_seminorm(u: GridFunction, k: int, p: float = 2.0,
                      region: CompactMask | None = None) -> SeminormReport:
    """Sum over ``|alpha| = k`` of the ``L^p`` norms of ``D^alpha u``.

    Each multi-index is counted once and the sum is taken outside the
    ``p``-norm.  With a region only difference samples whose stencil lies
    inside the region contribute.
    """
    if not p >= 1:
        raise ValueError(f"exponent must be at least 1, got {p}")
    val = float(sum(_alpha_norms(u, k, float(p), region)))
    name = "whole" if region is None else region.provenance
    return SeminormReport(int(k), float(p), name, val)


def sobolev_norm(u: GridFunction, m: int, p: float = 2.0) -> float:
    """``sum_{k=0}^m ||nabla^k u||_{L^p}``."""
    return float(sum(gradient_seminorm(u, k, p).value for k in range(m + 1)))
