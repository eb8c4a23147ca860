"""Polynomial capacities, the condenser capacity and its sharp variant.

Energies for ``p = 2`` are the quadratic form
``sum_{|alpha|=m} ||D^alpha u||_2^2``.  Every result carries the bound
kind of its value: ``exact-eigen`` or ``exact-qp`` for the quadratic
routes, ``upper-bound-multistart`` or ``upper-bound`` when a local or
convex solver supplied an attained, but not certified minimal, value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .calculus import energy_matrix, gradient_energy, gradient_seminorm
from .classes import FunctionClassSpec
from .grid import CompactMask, GridCube, GridFunction, diamond_dilate, dilate_mask, double_cube, transfer_mask
from .polynomials import Polynomial, _orders, basis_dim, projection_operator, vandermonde
from .solvers import constrained_quadratic, convex_seminorm_problem, obstacle_active_set, pinned_minimizer

__all__ = [
    "CapacityResult",
    "gamma_capacity",
    "theta_capacity",
    "condenser_capacity",
    "sharp_capacity",
    "theta_test_set_check",
    "theta_quotient",
]

EXACT_EIGEN = "exact-eigen"
EXACT_QP = "exact-qp"
UPPER_MULTI = "upper-bound-multistart"
UPPER = "upper-bound"


@dataclass(frozen=True, eq=False)
class CapacityResult:
    """Value of a capacity with its witness and solver diagnostics."""

    value: float
    witness: GridFunction | None
    polynomial: Polynomial | None
    bound_kind: str
    diagnostics: dict = field(default_factory=dict)
    feasible: bool = True


def _energy_value(u: GridFunction, m: int, p: float) -> float:
    if p == 2:
        return gradient_energy(u, m)
    return gradient_seminorm(u, m, p).value ** p


def _lp_norm(values: np.ndarray, weight: float, p: float) -> float:
    return float((weight * np.sum(np.abs(values) ** p)) ** (1 / p))


def _check_orders(m: int, k: int, p: float) -> None:
    if m < 1 or not 0 <= k <= m - 1:
        raise ValueError("orders must satisfy 0 <= k <= m-1")
    if not p >= 1:
        raise ValueError("exponent must be at least 1")


def _doubling_and_pins(Q: GridCube, cls: FunctionClassSpec, m: int):
    big = double_cube(Q)
    outer = big.outer_layers(m)
    zq = cls.zero_set(Q)
    pidx = big.parent_indices()
    zbig = pidx[zq]
    if outer[zbig].any():
        raise ValueError("trace set reaches the outer zero layers of the doubled cube")
    return big, np.flatnonzero(outer), zq, zbig


# ---------------------------------------------------------------- gamma


def gamma_capacity(Q: GridCube, cls: FunctionClassSpec, m: int, k: int, p: float = 2.0,
                   starts: int = 8, seed: int = 0) -> CapacityResult:
    """Polynomial capacity ``Gamma_{m,k,p}`` of a function class.

    Infimum over polynomials ``P`` of degree ``k`` with
    ``||P||_{L^p(Q)} = 1`` and grid functions ``u`` on ``2Q`` vanishing
    on the outer ``m`` node layers with ``u - P`` in the class on ``Q``,
    of the order-``m`` energy of ``u``.
    """
    _check_orders(m, k, p)
    if cls.pin is not None:
        raise ValueError("projection pins are not used by this capacity")
    big, outer, zq, zbig = _doubling_and_pins(Q, cls, m)
    EQ = vandermonde(Q.coords, k, Q.center)
    d = EQ.shape[1]
    A = energy_matrix(big, m)
    if p == 2 and not cls.nonnegative:
        EZ = EQ[zq]
        pins = np.concatenate([outer, zbig])
        vals = np.vstack([np.zeros((outer.size, d)), EZ])
        U = pinned_minimizer(A, pins, vals)
        S = U.T @ (A @ U)
        M = Q.weight * EQ.T @ EQ
        lam, C = sla.eigh(0.5 * (S + S.T), M)
        c = C[:, 0]
        val = max(float(lam[0]), 0.0)
        u = GridFunction(big, U @ c)
        P = Polynomial(Q.dim, k, c, Q.center)
        diag = {"spectrum_low": [float(x) for x in lam[: min(3, d)]], "pinned_nodes": int(zbig.size)}
        return CapacityResult(val, u, P, EXACT_EIGEN, diag)
    return _gamma_convex(Q, big, cls, m, k, p, outer, zq, zbig, EQ, starts, seed)


def _gamma_convex(Q, big, cls, m, k, p, outer, zq, zbig, EQ, starts, seed):
    import cvxpy as cp

    d = EQ.shape[1]
    u = cp.Variable(big.size)
    pv = cp.Parameter(int(zbig.size)) if zbig.size else None
    obj, _ = convex_seminorm_problem(big, m, p, u)
    cons = [u[outer] == 0]
    if pv is not None:
        cons.append(u[zbig] == pv)
    pq = cp.Parameter(Q.size)
    if cls.nonnegative:
        cons.append(u[big.parent_indices()] - pq >= 0)
    prob = cp.Problem(cp.Minimize(obj), cons)
    rng = np.random.default_rng(seed)
    dirs = list(np.eye(d)) + list(rng.standard_normal((max(starts - d, 0), d)))
    best = (np.inf, None, None)
    for c in dirs:
        c = c / _lp_norm(EQ @ c, Q.weight, p)
        if pv is not None:
            pv.value = EQ[zq] @ c
        pq.value = EQ @ c
        prob.solve(solver="CLARABEL")
        if u.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
            continue
        w = GridFunction(big, np.asarray(u.value))
        val = _energy_value(w, m, p)
        if val < best[0]:
            best = (val, w, c)
    if best[1] is None:
        raise RuntimeError("no direction produced a feasible extension")
    P = Polynomial(Q.dim, k, best[2], Q.center)
    return CapacityResult(float(best[0]), best[1], P, UPPER_MULTI, {"starts": len(dirs)})


# ------------------------------------------------------------- condenser


def _on_doubling(Q: GridCube, K: CompactMask) -> tuple:
    big = double_cube(Q)
    Kb = K if K.grid.same_as(big) else transfer_mask(K, big)
    return big, Kb


def condenser_capacity(Q: GridCube, K: CompactMask, m: int, p: float = 2.0) -> CapacityResult:
    """Condenser capacity: least energy of ``phi >= 1`` on ``K`` vanishing near ``2Q``'s boundary."""
    if not p >= 1:
        raise ValueError("exponent must be at least 1")
    big, Kb = _on_doubling(Q, K)
    outer = np.flatnonzero(big.outer_layers(m))
    if Kb.is_empty():
        return CapacityResult(0.0, GridFunction(big, np.zeros(big.size)), None, EXACT_QP, {"empty": True})
    if big.outer_layers(m)[Kb.indices].any():
        raise ValueError("compact set reaches the outer zero layers")
    if p == 2:
        A = energy_matrix(big, m)
        u, it, ok = obstacle_active_set(A, outer, Kb.indices)
        if ok:
            w = GridFunction(big, u)
            return CapacityResult(gradient_energy(w, m), w, None, EXACT_QP, {"iterations": it})
    return _condenser_convex(big, Kb, m, p, outer)


def _condenser_convex(big, Kb, m, p, outer):
    import cvxpy as cp

    u = cp.Variable(big.size)
    obj, _ = convex_seminorm_problem(big, m, p, u)
    prob = cp.Problem(cp.Minimize(obj), [u[outer] == 0, u[Kb.indices] >= 1])
    prob.solve(solver="CLARABEL")
    if u.value is None:
        raise RuntimeError(f"condenser solve failed: {prob.status}")
    v = np.asarray(u.value)
    v[outer] = 0.0
    v[Kb.indices] = np.maximum(v[Kb.indices], 1.0)
    w = GridFunction(big, v)
    return CapacityResult(_energy_value(w, m, p), w, None, UPPER if p != 2 else EXACT_QP,
                          {"iterations": int(prob.solver_stats.num_iters or 0)})


def sharp_capacity(Q: GridCube, K: CompactMask, m: int, p: float = 2.0, rho: int = 1) -> CapacityResult:
    """Capacity with ``phi = 1`` on ``K`` dilated by ``rho`` cells and
    derivatives of order ``1..m-1`` vanishing there."""
    if rho < 1:
        raise ValueError("dilation radius must be at least 1")
    big, Kb = _on_doubling(Q, K)
    if Kb.is_empty():
        return CapacityResult(0.0, GridFunction(big, np.zeros(big.size)), None, EXACT_QP, {"empty": True})
    S = diamond_dilate(dilate_mask(Kb, rho), m - 1).indices
    outer_flags = big.outer_layers(m)
    if outer_flags[S].any():
        raise ValueError("dilated set touches the outer zero layers")
    outer = np.flatnonzero(outer_flags)
    pins = np.concatenate([outer, S])
    vals = np.concatenate([np.zeros(outer.size), np.ones(S.size)])
    if p == 2:
        u = pinned_minimizer(energy_matrix(big, m), pins, vals)
        w = GridFunction(big, u)
        return CapacityResult(gradient_energy(w, m), w, None, EXACT_QP, {"pinned": int(S.size)})
    import cvxpy as cp

    x = cp.Variable(big.size)
    obj, _ = convex_seminorm_problem(big, m, p, x)
    cp.Problem(cp.Minimize(obj), [x[pins] == vals]).solve(solver="CLARABEL")
    w = GridFunction(big, np.asarray(x.value))
    return CapacityResult(_energy_value(w, m, p), w, None, UPPER, {})


# ----------------------------------------------------------------- theta


class _LowRank:
    """The operator ``E @ R`` applied in factored form."""

    def __init__(self, E: np.ndarray, R: np.ndarray):
        self.E, self.R = E, R

    def __matmul__(self, x):
        return self.E @ (self.R @ x)

    @property
    def T(self) -> "_LowRank":
        return _LowRank(self.R.T, self.E.T)

    def columns(self, idx) -> "_LowRank":
        return _LowRank(self.E, self.R[:, idx])

    def toarray(self) -> np.ndarray:
        return self.E @ self.R


def _theta_operators(Q: GridCube, m: int, k: int):
    """``R``, ``E`` and the degree-``k`` and complement parts of ``E R``."""
    R, E, _ = projection_operator(Q, m - 1)
    low = _orders(Q.dim, m - 1) <= k
    return R, E, _LowRank(E[:, low], R[low]), _LowRank(E[:, ~low], R[~low])


def theta_test_set_check(u: GridFunction, m: int, k: int, alpha: float, p: float = 2.0,
                         rtol: float = 1e-7) -> dict:
    """Evaluate both test-set inequalities for ``u`` on its grid."""
    R, E, Pk, Pco = _theta_operators(u.grid, m, k)
    w = u.grid.weight
    low = _lp_norm(Pk @ u.values, w, p)
    co = _lp_norm(Pco @ u.values, w, p)
    full = _lp_norm(E @ (R @ u.values), w, p)
    res = _lp_norm(u.values - E @ (R @ u.values), w, p)
    slack = rtol * max(full, 1e-300)
    return {
        "low": low, "co": co, "full": full, "residual": res,
        "ratio_ok": bool(low + slack >= alpha * co),
        "residual_ok": bool(res <= 0.5 * full + slack),
    }


def theta_quotient(u: GridFunction, m: int, k: int, p: float = 2.0) -> float:
    """``||nabla^m u||^p / ||Pi_{m-1,k} u||^p`` (energy form for ``p = 2``)."""
    _, _, Pk, _ = _theta_operators(u.grid, m, k)
    den = _lp_norm(Pk @ u.values, u.grid.weight, p) ** p
    num = _energy_value(u, m, p)
    if den == 0:
        return 0.0 if num == 0 else np.inf
    return num / den


def _lin_grad(M: np.ndarray, u: np.ndarray, w: float, p: float) -> np.ndarray:
    """Gradient of ``x -> ||M x||_{L^p}`` at ``u`` (a supporting linear functional)."""
    y = M @ u
    nrm = _lp_norm(y, w, p)
    if nrm == 0:
        return np.zeros_like(u)
    return w * (M.T @ (np.sign(y) * np.abs(y) ** (p - 1))) / nrm ** (p - 1)


def _smooth_cutoff(Q: GridCube, zero: np.ndarray, radius: int) -> np.ndarray:
    """``1 - psi`` with ``psi = 1`` on ``zero`` decaying to 0 over ``radius`` cells."""
    from scipy import ndimage

    if not zero.any():
        return np.ones(Q.size)
    dist = ndimage.distance_transform_edt(~zero.reshape(Q.shape)).ravel()
    t = np.clip(dist / max(radius, 1), 0, 1)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def _theta_starts(Q, cls, m, k, zero, count, seed, extra):
    rng = np.random.default_rng(seed)
    Ek = vandermonde(Q.coords, k, Q.center)
    cands = []
    for j in range(Ek.shape[1]):
        cands.append(Ek[:, j])
    for r in (1, 2, 4, 8, Q.n):
        cut = _smooth_cutoff(Q, zero, r)
        for j in range(Ek.shape[1]):
            cands.append(Ek[:, j] * cut)
    for v in extra:
        cands.append(np.asarray(v, float))
    while len(cands) < count:
        r = int(rng.integers(1, max(2, Q.n // 2)))
        c = rng.standard_normal(Ek.shape[1])
        cands.append((Ek @ c) * _smooth_cutoff(Q, zero, r))
    out = []
    for v in cands[:count]:
        v = v.copy()
        v[zero] = 0.0
        if cls.nonnegative:
            v = np.abs(v)
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v = v / nv
        if any(abs(float(v @ o)) > 1 - 1e-9 for o in out):
            continue
        out.append(v)
    return out


def theta_capacity(Q: GridCube, cls: FunctionClassSpec, m: int, k: int, p: float = 2.0,
                   alpha: float = 4.0, starts: int = 32, seed: int = 0, max_iter: int = 30,
                   refine: int = 4, extra_starts=(), gamma_witness: bool = True) -> CapacityResult:
    """Polynomial capacity ``Theta^alpha_{m,k,p}`` of a function class on ``Q``.

    The infimum of ``||nabla^m u||^p / ||Pi_{m-1,k} u||^p`` over the
    class members in the test set, capped at 1.  The test set is
    nonconvex; each start runs a convex-concave iteration that keeps
    every iterate in the test set, so the value is an attained upper
    bound.  With a projection pin the problem is convex and solved once.
    """
    _check_orders(m, k, p)
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    zero = cls.zero_set(Q)
    if cls.pin is not None:
        return _theta_pinned(Q, cls, m, k, p, alpha, zero)
    free = np.flatnonzero(~zero)
    if free.size == 0:
        return CapacityResult(1.0, None, None, UPPER_MULTI, {"reason": "empty test set"}, feasible=False)
    extra = list(extra_starts)
    if gamma_witness and not cls.nonnegative and p == 2:
        try:
            g = gamma_capacity(Q, cls, m, k, p)
            uq = g.witness.values[double_cube(Q).parent_indices()]
            extra.append(vandermonde(Q.coords, k, Q.center) @ g.polynomial.coeffs - uq)
        except ValueError:
            pass
    cands = _theta_starts(Q, cls, m, k, zero, starts, seed, extra)
    solver = _ThetaCCP(Q, m, k, p, alpha, free, cls.nonnegative)
    scored = []
    for i, v in enumerate(cands):
        x = v[free]
        x, val = solver.step(x)
        if x is not None:
            scored.append((val, i, x))
    if not scored:
        return CapacityResult(1.0, None, None, UPPER_MULTI,
                              {"starts": len(cands), "reason": "no start reached the test set"}, feasible=False)
    scored.sort(key=lambda t: (t[0], t[1]))
    best = None
    iters = 0
    for val, i, x in scored[:refine]:
        for _ in range(max_iter - 1):
            x2, v2 = solver.step(x)
            iters += 1
            if x2 is None or v2 > val * (1 - 1e-7):
                if x2 is not None and v2 < val:
                    x, val = x2, v2
                break
            x, val = x2, v2
        if best is None or val < best[0]:
            best = (val, i, x)
    u = np.zeros(Q.size)
    u[free] = best[2]
    wf = GridFunction(Q, u / max(np.abs(u).max(), 1e-300))
    value = theta_quotient(wf, m, k, p)
    chk = theta_test_set_check(wf, m, k, alpha, p)
    diag = {"starts": len(cands), "accepted": len(scored), "iterations": iters,
            "test_set": {"ratio_ok": chk["ratio_ok"], "residual_ok": chk["residual_ok"]}}
    if not (chk["ratio_ok"] and chk["residual_ok"]):
        raise RuntimeError("theta witness left the test set")
    R, _, _ = projection_operator(Q, m - 1)
    P = Polynomial(Q.dim, m - 1, R @ wf.values, Q.center)
    return CapacityResult(min(value, 1.0), wf, P, UPPER_MULTI, diag)


class _ThetaCCP:
    """One linearised convex step of the test-set constrained quotient.

    The projection enters through its coefficients ``y = R u`` so every
    constraint stays sparse or thin.
    """

    def __init__(self, Q, m, k, p, alpha, free, nonneg):
        import cvxpy as cp

        from .calculus import compact_operator, multi_indices

        R, E, Pk, _ = _theta_operators(Q, m, k)
        self.Q, self.m, self.k, self.p, self.alpha = Q, m, k, p, alpha
        self.free = free
        w = Q.weight
        zero = np.setdiff1d(np.arange(Q.size), free)
        self.Pk = Pk.columns(free)
        self.Pfull = _LowRank(E, R[:, free])
        low = _orders(Q.dim, m - 1) <= k
        nf, d = free.size, E.shape[1]
        x = cp.Variable(nf)
        y = cp.Variable(d)
        self.x = x
        self.a1 = cp.Parameter(nf)
        self.a2 = cp.Parameter(nf)
        ops = [compact_operator(Q, a)[:, free] for a in multi_indices(Q.dim, m)]
        sc = w ** (1 / p)
        if p == 2:
            obj = w * sum(cp.sum_squares(D @ x) for D in ops)
            Gco = w * E[:, ~low].T @ E[:, ~low]
            co_norm = cp.norm(_psd_factor(Gco) @ y[~low], 2) if (~low).any() else 0
        else:
            obj = sum(sc * cp.norm(D @ x, p) for D in ops)
            co_norm = sc * cp.norm(E[:, ~low] @ y[~low], p) if (~low).any() else 0
        resid = x - E[free] @ y
        if zero.size:
            resid = cp.hstack([resid, -(E[zero] @ y)])
        cons = [y == R[:, free] @ x,
                self.a1 @ x >= 1,
                alpha * co_norm <= self.a1 @ x,
                sc * cp.norm(resid, p) <= 0.5 * (self.a2 @ x)]
        if nonneg:
            cons.append(x >= 0)
        self.prob = cp.Problem(cp.Minimize(obj), cons)

    def step(self, x0):
        w, p = self.Q.weight, self.p
        a1 = _lin_grad(self.Pk, x0, w, p)
        a2 = _lin_grad(self.Pfull, x0, w, p)
        if not np.any(a1) or not np.any(a2):
            return None, np.inf
        self.a1.value = a1
        self.a2.value = a2
        try:
            self.prob.solve(solver="CLARABEL")
        except Exception:
            return None, np.inf
        if self.x.value is None or self.prob.status not in ("optimal", "optimal_inaccurate"):
            return None, np.inf
        x = np.asarray(self.x.value)
        u = np.zeros(self.Q.size)
        u[self.free] = x
        g = GridFunction(self.Q, u)
        chk = theta_test_set_check(g, self.m, self.k, self.alpha, p)
        if chk["low"] == 0 or not (chk["ratio_ok"] and chk["residual_ok"]):
            return None, np.inf
        return x, theta_quotient(g, self.m, self.k, p)


def _psd_factor(A) -> np.ndarray:
    """Dense ``L`` with ``L^T L = A`` for a PSD matrix."""
    Ad = np.asarray(A.todense()) if hasattr(A, "todense") else np.asarray(A)
    lam, V = np.linalg.eigh(0.5 * (Ad + Ad.T))
    lam = np.clip(lam, 0, None)
    return (V * np.sqrt(lam)).T


def _theta_pinned(Q, cls, m, k, p, alpha, zero) -> CapacityResult:
    import cvxpy as cp

    P = cls.pin
    if P.degree != m - 1 or P.dim != Q.dim:
        raise ValueError("pin must be a polynomial of degree m-1 on the cube")
    c = np.asarray(P.coeffs)
    R, E, _ = projection_operator(Q, m - 1)
    low = _orders(Q.dim, m - 1) <= k
    w = Q.weight
    nk = _lp_norm(E[:, low] @ c[low], w, p)
    nco = _lp_norm(E[:, ~low] @ c[~low], w, p)
    nfull = _lp_norm(E @ c, w, p)
    if not np.any(c):
        zero_u = GridFunction(Q, np.zeros(Q.size))
        return CapacityResult(0.0, zero_u, P, EXACT_QP, {"reason": "zero pin"})
    if nk < alpha * nco:
        return CapacityResult(1.0, None, P, EXACT_QP, {"reason": "pin outside the test set"}, feasible=False)
    x = cp.Variable(Q.size)
    obj, _ = convex_seminorm_problem(Q, m, p, x)
    cons = [R @ x == c, w ** (1 / p) * cp.norm(x - E @ c, p) <= 0.5 * nfull]
    if zero.any():
        cons.append(x[np.flatnonzero(zero)] == 0)
    if cls.nonnegative:
        cons.append(x >= 0)
    prob = cp.Problem(cp.Minimize(obj), cons)
    try:
        prob.solve(solver="CLARABEL")
    except Exception:
        prob.status = "solver_error"
    if x.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        return CapacityResult(1.0, None, P, EXACT_QP, {"reason": f"pinned class empty ({prob.status})"},
                              feasible=False)
    u = np.asarray(x.value)
    u[zero] = 0.0
    g = GridFunction(Q, u)
    val = _energy_value(g, m, p) / nk**p
    return CapacityResult(min(val, 1.0), g, P, EXACT_QP, {"iterations": int(prob.solver_stats.num_iters or 0)})
