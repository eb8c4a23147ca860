"""Quadratic and convex solvers shared by the variational problems."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import nnls

from .calculus import compact_operator, multi_indices
from .grid import GridCube

__all__ = [
    "pinned_minimizer",
    "constrained_quadratic",
    "obstacle_active_set",
    "sup_quotient",
    "sup_quotient_sparse",
    "convex_seminorm_problem",
]


def _free(n: int, pinned: np.ndarray) -> np.ndarray:
    mask = np.ones(n, bool)
    mask[pinned] = False
    return np.flatnonzero(mask)


def pinned_minimizer(A: sp.spmatrix, pinned: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Minimise ``u^T A u`` subject to ``u[pinned] = values``.

    ``values`` may hold several right-hand sides as columns; the result
    has one column per right-hand side.  ``A`` restricted to the free
    nodes must be positive definite.
    """
    n = A.shape[0]
    pinned = np.asarray(pinned, int)
    vals = np.asarray(values, float)
    squeeze = vals.ndim == 1
    vals = vals.reshape(len(pinned), -1)
    free = _free(n, pinned)
    U = np.zeros((n, vals.shape[1]))
    U[pinned] = vals
    if free.size:
        A = sp.csr_matrix(A)
        Aff = A[free][:, free].tocsc()
        rhs = -(A[free][:, pinned] @ vals)
        U[free] = spla.splu(Aff).solve(np.asarray(rhs))
    return U[:, 0] if squeeze else U


def constrained_quadratic(A, pinned: np.ndarray, values: np.ndarray, C: np.ndarray | None = None,
                          d: np.ndarray | None = None, tol: float = 1e-8):
    """Minimise ``u^T A u`` with pins ``u[pinned] = values`` and rows ``C u = d``.

    Null-space method on the free nodes: a minimum-norm particular
    solution of the dense rows plus the minimiser over their kernel.
    ``A`` must be positive definite on that kernel.  Returns
    ``(u, feasible)``; ``feasible`` is false when the constraints are
    inconsistent.
    """
    A = np.asarray(A.todense()) if sp.issparse(A) else np.asarray(A, float)
    n = A.shape[0]
    pinned = np.asarray(pinned, int)
    vals = np.asarray(values, float).ravel()
    free = _free(n, pinned)
    u = np.zeros(n)
    u[pinned] = vals
    if free.size == 0:
        ok = C is None or len(C) == 0 or np.allclose(np.asarray(C) @ u, d, atol=tol)
        return u, bool(ok)
    b = A[np.ix_(free, pinned)] @ vals
    Aff = A[np.ix_(free, free)]
    if C is None or len(C) == 0:
        u[free] = np.linalg.solve(Aff, -b)
        return u, True
    C = np.asarray(C, float)
    e = np.asarray(d, float).ravel() - C[:, pinned] @ vals
    Cf = C[:, free]
    scale = np.linalg.norm(Cf, axis=1)
    scale[scale == 0] = 1.0
    Cn, en = Cf / scale[:, None], e / scale
    x0, *_ = np.linalg.lstsq(Cn, en, rcond=None)
    resid = np.linalg.norm(Cn @ x0 - en)
    if resid > tol * max(1.0, np.linalg.norm(en)):
        return u, False
    Z = sla.null_space(Cn)
    if Z.shape[1]:
        H = Z.T @ Aff @ Z
        g = Z.T @ (Aff @ x0 + b)
        y = np.linalg.solve(0.5 * (H + H.T), -g)
        x0 = x0 + Z @ y
    u[free] = x0
    return u, True


def obstacle_active_set(A: sp.spmatrix, zero: np.ndarray, lower: np.ndarray, bound: float = 1.0,
                        tol: float = 1e-10, max_iter: int = 500):
    """Minimise ``u^T A u`` with ``u[zero] = 0`` and ``u[lower] >= bound``.

    Up to ``SCHUR_LIMIT`` obstacle nodes the problem is reduced to its
    Schur complement on those nodes and solved exactly by non-negative
    least squares.  Larger obstacles use a primal active-set iteration
    started from the fully active set.  Returns
    ``(u, iterations, converged)``.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    zero = np.asarray(zero, int)
    lower = np.asarray(lower, int)
    if 0 < lower.size <= SCHUR_LIMIT:
        out = _obstacle_schur(A, zero, lower, bound, tol)
        if out is not None:
            return out
    active = np.ones(lower.size, bool)

    def solve(act):
        pins = np.concatenate([zero, lower[act]])
        vals = np.concatenate([np.zeros(zero.size), np.full(int(act.sum()), bound)])
        return pinned_minimizer(A, pins, vals)

    u = solve(active)
    scale = max(1.0, abs(bound))
    for it in range(1, max_iter + 1):
        mult = (A @ u)[lower]
        neg = active & (mult < -tol * scale * max(1.0, np.abs(mult).max()))
        if not neg.any():
            return u, it, True
        trial = active.copy()
        if it > 20:
            j = np.flatnonzero(active)[np.argmin(mult[active])]
            trial[j] = False
        else:
            trial[neg] = False
        target = solve(trial)
        step = 1.0
        blocking = None
        inactive = np.flatnonzero(~trial)
        du = target[lower[inactive]] - u[lower[inactive]]
        slack = u[lower[inactive]] - bound
        dec = du < -1e-15
        if dec.any():
            ratios = slack[dec] / -du[dec]
            j = int(np.argmin(ratios))
            if ratios[j] < 1.0:
                step = max(float(ratios[j]), 0.0)
                blocking = inactive[np.flatnonzero(dec)[j]]
        u = u + step * (target - u)
        active = trial
        if blocking is not None:
            active[blocking] = True
            u[lower[blocking]] = bound
    return u, max_iter, False


SCHUR_LIMIT = 1500


def _obstacle_schur(A, zero, lower, bound, tol):
    L = lower.size
    pins = np.concatenate([zero, lower])
    vals = np.vstack([np.zeros((zero.size, L)), np.eye(L)])
    U = np.asarray(pinned_minimizer(A, pins, vals))
    S = U.T @ (A @ U)
    S = 0.5 * (S + S.T)
    try:
        C = sla.cholesky(S, lower=True)
    except sla.LinAlgError:
        return None
    b = np.full(L, float(bound))
    # v = b + w, w >= 0 minimises ||C^T (b + w)||^2
    w, _ = nnls(C.T, -C.T @ b, maxiter=50 * L)
    v = b + w
    u = U @ v
    u[lower] = np.maximum(u[lower], bound)
    mult = (A @ u)[lower]
    ok = bool(np.all(mult[w <= 0] >= -1e-7 * max(1.0, np.abs(mult).max())))
    return u, 1, ok


def sup_quotient(S: np.ndarray, A: np.ndarray, rtol: float = 1e-10):
    """``inf {t >= 0 : t A - S is positive semidefinite}`` for PSD ``A``.

    Equals the supremum of ``x^T S x / x^T A x``.  Returns ``(t, x)``
    with a maximising vector ``x``; ``t = inf`` when some direction with
    ``x^T A x = 0`` has ``x^T S x`` not strictly negative.
    """
    S = 0.5 * (S + S.T)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 0:
        return 0.0, np.zeros(0)
    lam, V = np.linalg.eigh(A)
    top = max(float(lam[-1]), 0.0)
    null = lam <= rtol * max(top, 1e-300)
    if not null.any():
        w, X = sla.eigh(S, A, subset_by_index=[n - 1, n - 1])
        return max(float(w[0]), 0.0), X[:, 0]
    N = V[:, null]
    Y = V[:, ~null]
    Snn = N.T @ S @ N
    snn = np.linalg.eigvalsh(Snn)
    sscale = max(np.abs(np.linalg.eigvalsh(S)).max(), 1e-300)
    if snn[-1] > -rtol * sscale:
        ev, ex = np.linalg.eigh(Snn)
        return np.inf, N @ ex[:, -1]
    if Y.shape[1] == 0:
        return 0.0, np.zeros(n)
    Syn = Y.T @ S @ N
    red = Y.T @ S @ Y - Syn @ np.linalg.solve(Snn, Syn.T)
    w, X = sla.eigh(red, np.diag(lam[~null]), subset_by_index=[Y.shape[1] - 1, Y.shape[1] - 1])
    y = X[:, 0]
    x = Y @ y - N @ np.linalg.solve(Snn, Syn.T @ y)
    return max(float(w[0]), 0.0), x


def sup_quotient_sparse(S: sp.spmatrix, A: sp.spmatrix, rtol: float = 1e-12):
    """Sparse :func:`sup_quotient` for positive definite ``A``.

    Computes the largest eigenvalue of the pencil ``(S, A)`` by Lanczos
    iteration with a sparse factorisation of ``A``.  Returns ``None``
    when ``A`` is not safely positive definite, so callers can fall back
    to the dense route.
    """
    S = sp.csc_matrix(0.5 * (S + S.T))
    A = sp.csc_matrix(0.5 * (A + A.T))
    n = A.shape[0]
    if n < 3:
        return None
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True})
    d = lu.U.diagonal()
    if d.min() <= rtol * abs(d).max():
        return None
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    v0 = np.ones(n) / np.sqrt(n)
    w, X = spla.eigsh(S, k=1, M=A, Minv=Minv, which="LA", v0=v0, tol=1e-12, maxiter=20 * n)
    return max(float(w[0]), 0.0), X[:, 0]


def convex_seminorm_problem(grid: GridCube, m: int, p: float, variable):
    """cvxpy expression ``sum_alpha w^(1/p) ||D^alpha u||_p`` and its exponent.

    For ``p = 2`` the quadratic energy is returned instead (exponent 1),
    matching the exact quadratic routes.
    """
    import cvxpy as cp

    w = grid.weight
    ops = [compact_operator(grid, a) for a in multi_indices(grid.dim, m)]
    if p == 2:
        return w * sum(cp.sum_squares(D @ variable) for D in ops), 1.0
    return sum(w ** (1 / p) * cp.norm(D @ variable, p) for D in ops), float(p)
