"""Cube-by-cube redefinition of a function near a compact set.

A lattice of cubes of side ``delta`` is laid over the ambient grid and
shifted by half a side along every combination of axes.  In every cube
meeting ``K`` the function ``u`` is replaced by ``(1 - phi) u + phi w``,
where ``w`` minimises the order-``m`` energy on the working cell (the
cube dilated by 1.5) among functions vanishing on the full trace set of
``K`` and sharing the scaled projection of ``u``.  The companion
minimiser ``v`` over the partial trace class gives the cube ratio
``A_Q = ||nabla^m w|| / ||nabla^m v||``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import compact_operator, energy_matrix, gradient_energy, multi_indices
from .capacities import theta_capacity
from .classes import FunctionClassSpec, full_trace, partial_trace
from .grid import CompactMask, GridCube, GridFunction, _boxes
from .polynomials import Polynomial, basis_dim, projection_operator
from .solvers import constrained_quadratic

__all__ = [
    "LatticeConfig",
    "Cube",
    "CubeResult",
    "SynthesisReport",
    "build_lattice",
    "partition_of_unity",
    "cube_minimizers",
    "redefine_in_cube",
    "run_synthesis",
    "check_synthesis_condition",
    "gray_offsets",
    "smooth_trace_input",
]


@dataclass(frozen=True, eq=False)
class LatticeConfig:
    """Cube lattice on an ambient grid.

    ``step`` is the cube side in cells and ``offset`` the per-axis node
    offset of the lattice origin (0 or ``step // 2``).
    """

    ambient: GridCube
    delta: float
    step: int
    offset: tuple
    width: float = 0.25


@dataclass(frozen=True)
class Cube:
    """Closed lattice cube ``[lo, lo + step]`` in ambient node indices."""

    index: tuple
    lo: tuple
    step: int

    @property
    def center(self) -> tuple:
        return tuple(a + self.step // 2 for a in self.lo)

    @property
    def ident(self) -> str:
        return ",".join(str(j) for j in self.index)

    def cell_bounds(self) -> tuple:
        """Inclusive node box of the working cell (1.5 times the cube)."""
        r = (3 * self.step) // 4
        return tuple(c - r for c in self.center), tuple(c + r for c in self.center)

    def half_bounds(self) -> tuple:
        r = self.step // 4
        return tuple(c - r for c in self.center), tuple(c + r for c in self.center)


def _step(ambient: GridCube, delta: float) -> int:
    s = delta / ambient.h
    step = int(round(s))
    if abs(s - step) > 1e-9 * max(1.0, s):
        raise ValueError("cube side must be a multiple of the grid spacing")
    if step < 4:
        raise ValueError("cube side below four cells is too coarse for the stencils")
    if step % 2:
        raise ValueError("cube side must be an even number of cells")
    return step


def gray_offsets(dim: int, step: int) -> list:
    """Half-side shifts ``{0, step/2}^dim`` in reflected Gray-code order."""
    out = []
    for i in range(2**dim):
        g = i ^ (i >> 1)
        out.append(tuple((step // 2) * ((g >> a) & 1) for a in range(dim)))
    return out


def build_lattice(ambient: GridCube, delta: float, K: CompactMask | None = None,
                  offset: tuple | None = None, width: float = 0.25):
    """Lattice of side ``delta`` over the ambient grid.

    Returns ``(config, cubes, flagged)`` where ``cubes`` lists every cube
    with positive overlap with the ambient cube and ``flagged`` those
    whose closed cube contains a node of ``K``.
    """
    step = _step(ambient, delta)
    if offset is None:
        offset = (0,) * ambient.dim
    offset = tuple(int(o) for o in offset)
    cfg = LatticeConfig(ambient, float(delta), step, offset, float(width))
    n = ambient.n
    ranges = []
    for o in offset:
        js = [j for j in range(-2, (n - 1) // step + 2) if o + j * step < n - 1 and o + (j + 1) * step > 0]
        ranges.append(js)
    cubes = [Cube(tuple(j), tuple(o + a * step for o, a in zip(offset, j)), step) for j in itertools.product(*ranges)]
    flagged = []
    if K is not None and not K.is_empty():
        kidx = np.array(np.unravel_index(K.indices, ambient.shape)).T
        for c in cubes:
            lo = np.array(c.lo)
            if np.any(np.all((kidx >= lo) & (kidx <= lo + step), axis=1)):
                flagged.append(c)
    return cfg, cubes, flagged


def _profile(t: np.ndarray, width: float) -> np.ndarray:
    a = np.abs(t)
    s = np.clip((0.5 + width - a) / (2 * width), 0.0, 1.0)
    return s * s * s * (10 - 15 * s + 6 * s * s)


def _phi_box(cfg: LatticeConfig, cube: Cube, lo, hi) -> np.ndarray:
    axes = [_profile((np.arange(a, b + 1) - c) / cfg.step, cfg.width) for a, b, c in zip(lo, hi, cube.center)]
    out = axes[0]
    for ax in axes[1:]:
        out = np.multiply.outer(out, ax)
    return out


def _check_width(cfg: LatticeConfig) -> None:
    if not 0 < cfg.width <= 0.25:
        raise ValueError("mollification width must lie in (0, 1/4]")
    if cfg.width * cfg.step < 1:
        raise ValueError("mollification width is narrower than one cell")


def partition_of_unity(cfg: LatticeConfig, cubes: list | None = None) -> list:
    """Cutoffs ``phi_Q`` on the (clipped) working cells.

    Each entry is ``(cube, lo, hi, values)`` with ``values`` of shape of
    the inclusive node box ``lo..hi``.  The cutoff equals 1 on the
    half-cube and vanishes outside ``(1/2 + width) delta`` of the centre.
    The cutoffs sum to 1 at nodes at least ``delta / 4`` inside the
    ambient cube; closer to its boundary, cubes lying outside the grid
    are missing.
    """
    _check_width(cfg)
    if cubes is None:
        cubes = build_lattice(cfg.ambient, cfg.delta, None, cfg.offset, cfg.width)[1]
    n = cfg.ambient.n
    out = []
    for c in cubes:
        lo, hi = c.cell_bounds()
        lo = tuple(max(a, 0) for a in lo)
        hi = tuple(min(b, n - 1) for b in hi)
        out.append((c, lo, hi, _phi_box(cfg, c, lo, hi)))
    return out


def _cell_grid(cfg: LatticeConfig, cube: Cube) -> tuple:
    amb = cfg.ambient
    lo, hi = cube.cell_bounds()
    if min(lo) < 0 or max(hi) > amb.n - 1:
        raise ValueError(f"working cell of cube {cube.ident} leaves the ambient grid")
    nc = hi[0] - lo[0] + 1
    center = tuple(amb.lo[i] + amb.h * cube.center[i] for i in range(amb.dim))
    g = GridCube(amb.dim, nc, center, amb.h * (nc - 1))
    return g, amb.box_indices(lo, hi)


@dataclass(frozen=True, eq=False)
class CubeResult:
    """Per-cube minimisers and their energy ratio."""

    cube: str
    v: np.ndarray | None
    w: np.ndarray | None
    ratio: float
    status: str
    energies: tuple = (0.0, 0.0)


def cube_minimizers(u: GridFunction, cfg: LatticeConfig, cube: Cube, zero_partial: np.ndarray,
                    zero_full: np.ndarray, m: int, p: float = 2.0, nonnegative: bool = False) -> CubeResult:
    """Energy minimisers on the working cell with a pinned projection.

    ``zero_partial`` and ``zero_full`` are ambient node flags of the two
    trace classes.  The projection has degree ``m - 1`` and ladder
    weights ``delta**-(m - i)``.
    """
    if p != 2:
        raise ValueError("cube minimisers are implemented for p = 2")
    g, idx = _cell_grid(cfg, cube)
    uc = u.values[idx]
    weights = [cfg.delta ** (-(m - i)) for i in range(m)]
    R, _, _ = projection_operator(g, m - 1, weights)
    target = R @ uc
    A = energy_matrix(g, m)
    sols = []
    for zero in (zero_partial[idx], zero_full[idx]):
        pins = np.flatnonzero(zero)
        f, ok = constrained_quadratic(A, pins, np.zeros(pins.size), R, target)
        if nonnegative and ok and f.min() < -1e-12 * max(1.0, np.abs(f).max()):
            # The unconstrained minimiser is optimal whenever it is already nonnegative.
            f, ok = _nonneg_min(g, m, pins, R, target)
        if not ok:
            return CubeResult(cube.ident, None, None, math.nan, "infeasible")
        f[pins] = 0.0
        sols.append(f)
    v, w = sols
    ev = float(v @ (A @ v))
    ew = float(w @ (A @ w))
    tol = 1e-12 * max(1.0, float(uc @ uc))
    if ev <= tol and ew <= tol:
        ratio = 1.0
    elif ev <= tol:
        ratio = math.inf
    else:
        ratio = math.sqrt(max(ew, 0.0) / ev)
    return CubeResult(cube.ident, v, w, ratio, "ok" if np.isfinite(ratio) else "degenerate", (ev, ew))


def _nonneg_min(grid: GridCube, m: int, pins, R, target):
    import cvxpy as cp

    n = grid.size
    x = cp.Variable(n)
    energy = sum(cp.sum_squares(compact_operator(grid, a) @ x) for a in multi_indices(grid.dim, m))
    cons = [R @ x == target, x >= 0]
    if pins.size:
        cons.append(x[pins] == 0)
    prob = cp.Problem(cp.Minimize(energy), cons)
    try:
        prob.solve(solver="CLARABEL")
    except Exception:
        return np.zeros(n), False
    if x.value is None or prob.status not in ("optimal", "optimal_inaccurate"):
        return np.zeros(n), False
    return np.maximum(np.asarray(x.value), 0.0), True


def redefine_in_cube(u: np.ndarray, cfg: LatticeConfig, cube: Cube, w: np.ndarray, zero_full: np.ndarray,
                     m: int, tol: float = 1e-8) -> tuple:
    """Blend ``(1 - phi) u + phi w`` on the working cell.

    Returns the new ambient values and the replacement cost
    ``||nabla^m (result - u)||^2``.  Raises if the full trace condition
    fails on the half-cube.
    """
    _, idx = _cell_grid(cfg, cube)
    lo, hi = cube.cell_bounds()
    phi = _phi_box(cfg, cube, lo, hi).ravel()
    new = u.copy()
    new[idx] = (1 - phi) * u[idx] + phi * w
    half = _half_flags(cfg.ambient, cube)
    bad = half & zero_full & (np.abs(new) > tol * max(1.0, np.abs(u).max()))
    if bad.any():
        raise RuntimeError(f"full trace condition fails on the half-cube of {cube.ident}")
    diff = GridFunction(cfg.ambient, new - u)
    return new, gradient_energy(diff, m)


def _half_flags(amb: GridCube, cube: Cube) -> np.ndarray:
    lo, hi = cube.half_bounds()
    lo = [max(a, 0) for a in lo]
    hi = [min(b, amb.n - 1) for b in hi]
    f = np.zeros(amb.size, bool)
    if all(a <= b for a, b in zip(lo, hi)):
        f[amb.box_indices(lo, hi)] = True
    return f


def _support_flags(cfg: LatticeConfig, cube: Cube) -> np.ndarray:
    amb = cfg.ambient
    lo, hi = cube.cell_bounds()
    f = np.zeros(amb.size, bool)
    phi = _phi_box(cfg, cube, lo, hi).ravel()
    f[amb.box_indices(lo, hi)] = phi > 0
    return f


@dataclass(frozen=True, eq=False)
class SynthesisReport:
    """Outcome of the redefinition at one cube side."""

    delta: float
    records: list
    covered_sizes: list
    total_cost: float
    max_ratio: float
    multiplicity: int
    covered: bool
    partial: bool
    chain_rhs: float
    chain_ok: bool
    result: np.ndarray = field(repr=False, default=None)

    def summary(self) -> dict:
        return {
            "delta": self.delta, "cubes": len(self.records), "total_cost": self.total_cost,
            "max_ratio": self.max_ratio, "multiplicity": self.multiplicity, "covered": self.covered,
            "partial": self.partial, "chain_rhs": self.chain_rhs, "chain_ok": self.chain_ok,
            "covered_sizes": self.covered_sizes,
        }


def _classes(K: CompactMask, m: int, rho: int, nonnegative: bool):
    ambient_cls = partial_trace(K, m, 0 if nonnegative else m - 1, nonnegative=nonnegative)
    full = full_trace(K, m, rho=rho, nonnegative=nonnegative)
    return ambient_cls, full


def run_synthesis(u: GridFunction, K: CompactMask, m: int, p: float = 2.0,
                  deltas=(0.25, 0.125, 0.0625), rho: int = 1, width: float = 0.25,
                  nonnegative: bool = False, tol: float = 1e-8) -> list:
    """Redefine ``u`` near ``K`` for each cube side in ``deltas``.

    ``u`` must lie in the partial trace class of order ``m - 1`` (order 0
    and ``u >= 0`` in the nonnegative variant).  Returns one
    :class:`SynthesisReport` per side.
    """
    if p != 2:
        raise ValueError("synthesis runs are implemented for p = 2")
    amb = u.grid
    if not K.grid.same_as(amb):
        raise ValueError("compact set must live on the ambient grid")
    acls, fcls = _classes(K, m, rho, nonnegative)
    zp = acls.zero_set(amb)
    zf = fcls.zero_set(amb)
    scale = max(1.0, float(np.abs(u.values).max()))
    if np.any(np.abs(u.values[zp]) > tol * scale) or (nonnegative and u.values.min() < -tol * scale):
        raise ValueError("input function is not in the partial trace class")
    A = energy_matrix(amb, m)
    reports = []
    for delta in deltas:
        uj = u.values.copy()
        covered = np.zeros(amb.size, bool)
        mult = np.zeros(amb.size, int)
        records, sizes = [], []
        partial = False
        cells_energy = 0.0
        step = _step(amb, delta)
        for off in gray_offsets(amb.dim, step):
            cfg, _, flagged = build_lattice(amb, delta, K, off, width)
            _check_width(cfg)
            for cube in flagged:
                res = cube_minimizers(GridFunction(amb, uj), cfg, cube, zp, zf, m, p, nonnegative)
                if res.status == "infeasible":
                    partial = True
                    records.append({"cube": f"{off}:{cube.ident}", "ratio": None, "cost": None, "status": "infeasible"})
                    continue
                before = covered.copy()
                uj, cost = redefine_in_cube(uj, cfg, cube, res.w, zf, m, tol)
                covered |= _half_flags(amb, cube)
                mult += _support_flags(cfg, cube)
                _, idx = _cell_grid(cfg, cube)
                reg = np.zeros(amb.size, bool)
                reg[idx] = True
                cells_energy += _region_energy(u.values, amb, m, reg)
                assert np.all(covered[before]), "covered region shrank"
                if np.any(np.abs(uj[zp]) > tol * scale):
                    raise RuntimeError("redefinition left the partial trace class")
                if np.any(np.abs(uj[covered & zf]) > tol * scale):
                    raise RuntimeError("full trace condition lost on the covered region")
                if nonnegative and uj.min() < -tol * scale:
                    raise RuntimeError("redefinition produced negative values")
                records.append({"cube": f"{off}:{cube.ident}", "ratio": res.ratio, "cost": cost, "status": res.status})
            sizes.append(int(covered.sum()))
        diff = uj - u.values
        total = float(diff @ (A @ diff))
        ratios = [r["ratio"] for r in records if r["ratio"] is not None]
        maxA = max(ratios) if ratios else 1.0
        G = int(mult[K.flags].max()) if K.count else 0
        rhs = G * (1 + maxA) ** p * cells_energy
        reports.append(SynthesisReport(
            float(delta), records, sizes, total, float(maxA), G,
            bool(np.all(covered[K.flags])), partial, float(rhs), bool(total <= rhs * (1 + 1e-9) + 1e-300),
            uj,
        ))
    return reports


def _region_energy(values, grid, m, region_flags):
    from .grid import CompactMask as _M

    reg = _M(grid, region_flags, "cell")
    return gradient_energy(GridFunction(grid, values), m, reg)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def smooth_trace_input(ambient: GridCube, geometry, m: int, plateau: float = 0.75,
                       radius: float = 0.95) -> GridFunction:
    """Admissible input ``prod_i dist(x, B_i)^m`` times a smooth bump.

    ``B_i`` are the boxes of ``geometry`` grown by ``m - 1/2`` cells, so the
    result vanishes on the discrete partial trace set of order ``m - 1``.
    Each factor is ``C^{m-1,1}``, hence the product has finite order-``m``
    energy.  The cutoff is centred on the ambient cube, equals 1 within
    ``plateau`` and vanishes beyond ``radius``.
    """
    X = ambient.coords
    pad = (m - 0.5) * ambient.h * (1 + 1e-9)
    u = np.ones(ambient.size)
    for lo, hi in _boxes(geometry, ambient):
        gap = np.maximum(np.maximum(lo - pad - X, X - hi - pad), 0.0)
        u *= np.linalg.norm(gap, axis=1) ** m
    if not 0 <= plateau < radius:
        raise ValueError("need 0 <= plateau < radius")
    r = np.linalg.norm(X - np.asarray(ambient.center), axis=1)
    return GridFunction(ambient, u * _smoothstep((radius - r) / (radius - plateau)))


# ------------------------------------------------------- synthesis condition


def _pins(dim: int, m: int, count: int, seed: int, center) -> list:
    d = basis_dim(dim, m - 1)
    rng = np.random.default_rng(seed)
    coeffs = [np.eye(d)[0]]
    while len(coeffs) < count:
        c = rng.standard_normal(d)
        c[0] = abs(c[0]) + 1.0
        coeffs.append(c)
    return [Polynomial(dim, m - 1, c, center) for c in coeffs[:count]]


def _ratio(full: float, part: float) -> float:
    if math.isclose(full, part, rel_tol=1e-12, abs_tol=1e-15):
        return 1.0
    if part <= 0:
        return math.inf
    return full / part


def check_synthesis_condition(Q0: GridCube, family: list, m: int, k: int = 0, p: float = 2.0,
                              alpha: float = 4.0, rho: int = 1, pins: int = 4, seed: int = 0,
                              cap: float = 10.0, map_fn=map) -> dict:
    """Compare pinned ``Theta`` over the full and partial trace classes.

    For every set and pin ``P`` reports ``Theta(full, P) / Theta(partial, P)``
    together with the largest ratio and the members above ``cap``.
    """
    if p != 2:
        raise ValueError("the synthesis condition is checked for p = 2")
    polys = _pins(Q0.dim, m, pins, seed, Q0.center)
    jobs = [(K, P) for K in family for P in polys]
    rows = list(map_fn(_condition_row, [Q0] * len(jobs), jobs, [(m, k, p, alpha, rho)] * len(jobs)))
    finite = [r["ratio"] for r in rows]
    A = max(finite) if finite else 1.0
    return {"rows": rows, "A": A, "violations": [r for r in rows if r["ratio"] > cap], "cap": cap}


def _condition_row(Q0, job, params):
    K, P = job
    m, k, p, alpha, rho = params
    tf = theta_capacity(Q0, full_trace(K, m, rho).with_pin(P), m, k, p, alpha)
    tp = theta_capacity(Q0, partial_trace(K, m, m - 1).with_pin(P), m, k, p, alpha)
    return {"set": K.provenance, "pin": [float(c) for c in P.coeffs], "theta_full": tf.value,
            "theta_partial": tp.value, "ratio": _ratio(tf.value, tp.value)}
