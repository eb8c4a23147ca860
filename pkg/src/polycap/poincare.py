"""Sharp discrete Poincare constants and capacity equivalence reports.

For ``p = p0 = q = 2`` the constants are generalized eigenvalues of
quadratic forms restricted to the free nodes of the class; otherwise a
seeded family of test functions is pushed uphill by L-BFGS and the best
quotient is reported as a lower bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import minimize

from .calculus import compact_operator, energy_matrix, gradient_seminorm, multi_indices
from .capacities import (
    _smooth_cutoff,
    condenser_capacity,
    gamma_capacity,
    sharp_capacity,
    theta_capacity,
)
from .classes import FunctionClassSpec, full_trace, partial_trace
from .grid import CompactMask, GridCube, GridFunction
from .polynomials import project, projection_operator, vandermonde
from .solvers import sup_quotient, sup_quotient_sparse

__all__ = [
    "PoincareQuery",
    "PoincareResult",
    "EquivalenceReport",
    "poincare_constant",
    "weak_poincare_constant",
    "sample_functions",
    "equivalence_report",
]

EXACT = "exact-eigen"
LOWER = "lower-bound"


@dataclass(frozen=True, eq=False)
class PoincareQuery:
    """Inputs of a Poincare constant computation.

    ``mode="two-term"`` bounds ``||u||_q`` by
    ``C (||nabla^{k+1} u||_{p0} + ||nabla^m u||_p)``; ``mode="hedberg"``
    bounds it by ``c0 ||nabla^{k+1} u|| + C ||nabla^m u||``.
    """

    grid: GridCube
    cls: FunctionClassSpec
    m: int
    k: int = 0
    p: float = 2.0
    p0: float = 2.0
    q: float = 2.0
    mode: str = "two-term"
    c0: float = 2.0
    samples: int = 64
    seed: int = 0
    denominator: str = "sum"
    exact: bool = True

    def __post_init__(self):
        if self.m < 1 or not 0 <= self.k <= self.m - 1:
            raise ValueError("orders must satisfy k + 1 <= m")
        if self.mode not in ("two-term", "hedberg"):
            raise ValueError("mode must be 'two-term' or 'hedberg'")
        if min(self.p, self.p0, self.q) < 1:
            raise ValueError("exponents must be at least 1")
        if self.denominator not in ("sum", "quadratic"):
            raise ValueError("denominator must be 'sum' or 'quadratic'")
        N, mp = self.grid.dim, self.m * self.p
        if mp < N and self.q > N * self.p / (N - mp) + 1e-12:
            raise ValueError("q exceeds the Sobolev exponent")
        if self.q != self.p and not (self.p == 2 and self.q in (2, 4) and N <= 2):
            raise ValueError("q different from p is supported only for p = 2, q = 4, N <= 2")

    @property
    def exact_route(self) -> bool:
        return self.exact and self.p == self.p0 == self.q == 2 and not self.cls.nonnegative


@dataclass(frozen=True, eq=False)
class PoincareResult:
    value: float
    witness: GridFunction | None
    bound_kind: str
    diagnostics: dict = field(default_factory=dict)


def _restricted(grid: GridCube, order: int, free: np.ndarray):
    A = energy_matrix(grid, order)
    return A[free][:, free]


# Above this many free nodes the pencil is solved by sparse Lanczos
# iteration instead of dense eigendecomposition.
DENSE_LIMIT = 2000


def _pencil_sup(S, B):
    if S.shape[0] > DENSE_LIMIT:
        out = sup_quotient_sparse(S, B)
        if out is not None:
            return out
    return sup_quotient(S.toarray(), B.toarray())


def poincare_constant(query: PoincareQuery) -> PoincareResult:
    """Smallest constant of the two-term or split Poincare inequality."""
    g = query.grid
    zero = query.cls.zero_set(g)
    free = np.flatnonzero(~zero)
    if free.size == 0:
        return PoincareResult(0.0, GridFunction(g, np.zeros(g.size)), EXACT, {"reason": "class is {0}"})
    if query.exact_route:
        return _poincare_exact(query, free)
    return _poincare_sampled(query, zero)


def _poincare_exact(query: PoincareQuery, free: np.ndarray) -> PoincareResult:
    g, m, k = query.grid, query.m, query.k
    W = g.weight * sp.identity(free.size, format="csr")
    Am = _restricted(g, m, free)
    one_term = k + 1 == m
    if query.mode == "two-term":
        B = Am if one_term else Am + _restricted(g, k + 1, free)
        t, x = _pencil_sup(W, B)
        diag = {"surrogate_distortion": 1.0 if one_term else math.sqrt(2.0)}
    else:
        if one_term:
            t, x = _pencil_sup(W, Am)
            diag = {"split": "one-term"}
        else:
            S = W - query.c0**2 * _restricted(g, k + 1, free)
            t, x = _pencil_sup(S, Am)
            diag = {"split": "two-term", "c0": query.c0, "surrogate_distortion": math.sqrt(2.0)}
    u = np.zeros(g.size)
    u[free] = x
    value = math.sqrt(t) if np.isfinite(t) else math.inf
    nrm = np.abs(u).max()
    wit = GridFunction(g, u / nrm) if nrm > 0 else None
    return PoincareResult(value, wit, EXACT, diag)


# ---------------------------------------------------------------- sampling


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def sample_functions(grid: GridCube, zero: np.ndarray, count: int = 64, seed: int = 0,
                     nonnegative: bool = False, extra=()) -> list:
    """Seeded test functions vanishing on ``zero``.

    Smooth bumps, random cubic polynomials times a cutoff near the zero
    set, and any ``extra`` functions (for example capacity witnesses).
    """
    rng = np.random.default_rng(seed)
    pts = grid.coords
    out = [np.asarray(v, float).copy() for v in extra]
    cut = {r: _smooth_cutoff(grid, zero, r) for r in (1, 2, 4)}
    V = vandermonde(pts, 3, grid.center)
    i = 0
    while len(out) < count:
        if i % 2 == 0:
            c = grid.lo + rng.random(grid.dim) * grid.side
            r = grid.side * (0.15 + 0.5 * rng.random())
            d = np.linalg.norm(pts - c, axis=1) / r
            v = _smoothstep(1 - d)
        else:
            coef = rng.standard_normal(V.shape[1]) / (1 + np.arange(V.shape[1]))
            v = (V @ coef) * cut[(1, 2, 4)[(i // 2) % 3]]
        i += 1
        out.append(v)
    res = []
    for v in out[:count]:
        v = v.copy()
        v[zero] = 0.0
        if nonnegative:
            v = np.abs(v)
        if np.any(v):
            res.append(v / np.abs(v).max())
    return res


class _Norm:
    """``x -> (w sum |M x|^p)^(1/p)`` with gradient."""

    def __init__(self, M, w, p):
        self.M, self.w, self.p = M, w, p

    def __call__(self, x):
        y = self.M @ x
        val = (self.w * np.sum(np.abs(y) ** self.p)) ** (1 / self.p)
        if val == 0:
            return 0.0, np.zeros_like(x)
        gy = self.w * np.sign(y) * np.abs(y) ** (self.p - 1) / val ** (self.p - 1)
        return float(val), np.asarray(self.M.T @ gy).ravel()


def _seminorm_terms(grid, order, p, S):
    return [_Norm(compact_operator(grid, a) @ S, grid.weight, p) for a in multi_indices(grid.dim, order)]


def _poincare_sampled(query: PoincareQuery, zero: np.ndarray) -> PoincareResult:
    import scipy.sparse as sp

    g, m, k = query.grid, query.m, query.k
    free = np.flatnonzero(~zero)
    S = sp.identity(g.size, format="csr")[:, free]
    num = _Norm(S, g.weight, query.q)
    low = _seminorm_terms(g, k + 1, query.p0, S)
    top = _seminorm_terms(g, m, query.p, S)
    two_term = query.mode == "two-term"
    one_term = k + 1 == m
    quad = query.denominator == "quadratic"

    def combine(terms, square):
        if square:
            D = math.sqrt(sum(v * v for v, _ in terms))
            return D, sum(v * gr for v, gr in terms) / max(D, 1e-300)
        return sum(v for v, _ in terms), sum(gr for _, gr in terms)

    def quotient(x):
        n, gn = num(x)
        lv = [t(x) for t in low]
        tv = [t(x) for t in top]
        if two_term:
            D, gD = combine(tv if one_term else lv + tv, quad)
            nn, gnn = n, gn
        else:
            L, gL = combine(lv, False)
            D, gD = combine(tv, False)
            c0 = 0.0 if one_term else query.c0
            nn, gnn = n - c0 * L, gn - c0 * gL
        if D <= 1e-300:
            return (np.inf if nn > 0 else 0.0), np.zeros_like(x)
        return nn / D, (gnn * D - nn * gD) / D**2

    def negated(x):
        v, gr = quotient(x)
        return -v, -gr

    samples = sample_functions(g, zero, query.samples, query.seed, query.cls.nonnegative)
    scored = sorted(((quotient(v[free])[0], i) for i, v in enumerate(samples)), key=lambda t: (-t[0], t[1]))
    if scored and not np.isfinite(scored[0][0]):
        u = samples[scored[0][1]]
        return PoincareResult(math.inf, GridFunction(g, u), LOWER, {"reason": "zero denominator"})
    bounds = [(0, None)] * free.size if query.cls.nonnegative else None
    best_val, best_x = -np.inf, None
    for val, i in scored[:4]:
        x0 = samples[i][free]
        res = minimize(negated, x0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 300})
        x = res.x if -res.fun > val else x0
        v = max(-res.fun, val)
        if np.isfinite(v) and v > best_val:
            best_val, best_x = v, x
    u = np.zeros(g.size)
    u[free] = best_x
    value = float(max(best_val, 0.0)) if query.mode == "hedberg" else float(best_val)
    return PoincareResult(value, GridFunction(g, u / np.abs(u).max()), LOWER,
                          {"samples": len(samples), "denominator": query.denominator})


# ------------------------------------------------------------ weak constant


def weak_poincare_constant(grid: GridCube, r: int, p: float = 2.0, samples: int = 64,
                           seed: int = 0) -> PoincareResult:
    """Smallest ``A`` with ``sum_{k<=r} ||nabla^k (u - Pi u)|| <= A ||nabla^{r+1} u||``.

    For ``p = 2`` the numerator is the squared ladder (distortion at most
    ``sqrt(r+1)``) and the constant is exact.  Otherwise seeded samples
    are ascended with the quadratic projection and the final candidates
    are re-evaluated with the exact ``L^p`` projection (lower bound).
    """
    R, E, _ = projection_operator(grid, r)
    if p == 2:
        Y = sla.null_space(R)
        L = sum(energy_matrix(grid, j) for j in range(r + 1))
        A = energy_matrix(grid, r + 1)
        Ly = Y.T @ (L @ Y)
        Ay = Y.T @ (A @ Y)
        t, y = sup_quotient(Ly, Ay)
        u = Y @ y
        return PoincareResult(math.sqrt(t), GridFunction(grid, u / np.abs(u).max()), EXACT,
                              {"surrogate_distortion": math.sqrt(r + 1)})
    zero = np.zeros(grid.size, bool)
    cands = sample_functions(grid, zero, samples, seed)
    P = np.eye(grid.size) - E @ R
    import scipy.sparse as sp

    S = sp.identity(grid.size, format="csr")
    nums = [t for j in range(r + 1) for t in _seminorm_terms(grid, j, p, S)]
    dens = _seminorm_terms(grid, r + 1, p, S)

    def f(x):
        v = P @ x
        nv = [t(v) for t in nums]
        dv = [t(x) for t in dens]
        n = sum(a for a, _ in nv)
        gn = P.T @ sum(b for _, b in nv)
        d = sum(a for a, _ in dv)
        gd = sum(b for _, b in dv)
        if d <= 1e-300:
            return 0.0, np.zeros_like(x)
        return -n / d, -(gn * d - n * gd) / d**2

    scored = sorted(((-f(v)[0], i) for i, v in enumerate(cands)), key=lambda t: (-t[0], t[1]))
    best, arg = 0.0, None
    for _, i in scored[:4]:
        res = minimize(f, cands[i], jac=True, method="L-BFGS-B", options={"maxiter": 200})
        u = GridFunction(grid, res.x)
        pr = project(u, r, p)
        resid = GridFunction(grid, u.values - eval_values(pr.polynomial, grid))
        n = sum(gradient_seminorm(resid, j, p).value for j in range(r + 1))
        d = gradient_seminorm(u, r + 1, p).value
        if d > 0 and n / d > best:
            best, arg = n / d, u
    return PoincareResult(best, arg, LOWER, {"samples": len(cands)})


def eval_values(P, grid):
    return vandermonde(grid.coords, P.degree, grid.center) @ P.coeffs


# ----------------------------------------------------------- equivalences


@dataclass(frozen=True, eq=False)
class EquivalenceReport:
    """Per-member capacities and constants with fitted two-sided bounds."""

    family: str
    members: list
    constants: dict
    verdicts: dict
    extras: dict = field(default_factory=dict)


RATIOS = ("C_gamma", "theta_gamma", "sharp_condenser", "condenser_theta", "hedberg_theta", "hedberg_condenser")


def _member(Q, K, cfg) -> dict:
    m, k, p = cfg["m"], cfg.get("k", 0), cfg.get("p", 2.0)
    alpha, rho = cfg.get("alpha", 4.0), cfg.get("rho", 1)
    cls = full_trace(K, m, rho=rho)
    out = {"set": K.provenance, "nodes": K.count}
    gam = gamma_capacity(Q, cls, m, k, p)
    C = poincare_constant(PoincareQuery(Q, cls, m, k, p, p, p, "two-term"))
    th = theta_capacity(Q, cls, m, k, p, alpha=alpha, starts=cfg.get("starts", 32), seed=cfg.get("seed", 0))
    hed = poincare_constant(PoincareQuery(Q, cls, m, k, p, p, p, "hedberg", c0=cfg.get("c0", 2.0)))
    cond = condenser_capacity(Q, K, m, p)
    cond_mk = condenser_capacity(Q, K, m - k, p) if k > 0 else cond
    sharp = sharp_capacity(Q, K, m, p, rho=rho)
    out.update(gamma=gam.value, poincare=C.value, theta=th.value, hedberg=hed.value,
               condenser=cond.value, condenser_mk=cond_mk.value, sharp=sharp.value,
               bound_kinds={"gamma": gam.bound_kind, "poincare": C.bound_kind, "theta": th.bound_kind,
                            "hedberg": hed.bound_kind, "condenser": cond.bound_kind, "sharp": sharp.bound_kind})
    degenerate = gam.value <= 0 or not np.isfinite(C.value) or cond.value <= 0
    out["degenerate"] = bool(degenerate)
    if not degenerate:
        ip = 1.0 / p
        out["ratios"] = {
            "C_gamma": C.value * gam.value**ip,
            "theta_gamma": th.value / gam.value,
            "sharp_condenser": sharp.value / cond.value,
            "condenser_theta": cond.value / th.value if th.value > 0 else math.inf,
            "hedberg_theta": hed.value * th.value**ip,
            "hedberg_condenser": hed.value * cond_mk.value**ip,
        }
    if cfg.get("cone_check", False):
        out["cone"] = _cone_samples(Q, K, cond.value if m == 2 else condenser_capacity(Q, K, 2, p).value,
                                    p, cfg.get("samples", 64), cfg.get("seed", 0))
    return out


def _cone_samples(Q, K, cap2, p, count, seed) -> dict:
    """Largest ``||u|| C^{1/p} / ||nabla^2 u||`` over sampled nonnegative
    functions vanishing on ``K``."""
    cls = partial_trace(K, 2, 0, nonnegative=True)
    zero = cls.zero_set(Q)
    worst = 0.0
    for v in sample_functions(Q, zero, count, seed, nonnegative=True):
        u = GridFunction(Q, v)
        d = gradient_seminorm(u, 2, p).value
        if d > 0:
            worst = max(worst, gradient_seminorm(u, 0, p).value * cap2 ** (1 / p) / d)
    return {"A": worst, "samples": count}


def equivalence_report(Q: GridCube, family: list, cfg: dict, family_id: str = "family",
                       reference: dict | None = None, rtol: float = 1e-9, max_spread: float = 10.0,
                       map_fn=map) -> EquivalenceReport:
    """Capacities and Poincare constants across a family of compact sets.

    Fits, for every paired ratio, the interval ``[min, max]`` over the
    nondegenerate members and checks its spread against ``max_spread``.
    With ``reference`` (a previous report's constants) the intervals must
    also be reproduced to ``rtol``.
    """
    if len(family) < 3:
        raise ValueError("need at least three family members")
    members = list(map_fn(_member, [Q] * len(family), family, [cfg] * len(family)))
    good = [r for r in members if not r["degenerate"]]
    if not good:
        raise ValueError("degenerate family: every member has an infinite constant")
    constants, verdicts = {}, {}
    for name in RATIOS:
        vals = [r["ratios"][name] for r in good if np.isfinite(r["ratios"][name])]
        lo, hi = (min(vals), max(vals)) if vals else (math.nan, math.nan)
        spread = hi / lo if vals and lo > 0 else math.inf
        constants[name] = {"lower": lo, "upper": hi, "spread": spread}
        verdicts[name] = bool(spread <= max_spread)
    extras = {}
    cones = [r["cone"]["A"] for r in members if "cone" in r]
    if cones:
        extras["cone_A"] = {"max": max(cones), "min": min(cones),
                            "spread": max(cones) / min(cones) if min(cones) > 0 else math.inf}
        verdicts["cone_A"] = bool(np.isfinite(extras["cone_A"]["max"]) and extras["cone_A"]["spread"] <= max_spread)
    if reference is not None:
        for name, ref in reference.items():
            if name not in constants:
                continue
            cur = constants[name]
            ok = all(math.isclose(cur[b], ref[b], rel_tol=rtol, abs_tol=0.0) for b in ("lower", "upper"))
            verdicts[f"regression:{name}"] = bool(ok)
    return EquivalenceReport(family_id, members, constants, verdicts, extras)
