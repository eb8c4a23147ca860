"""Acceptance suites: analytic oracles, monotonicity, equivalences, cone,
synthesis and numerical hygiene.

Every suite returns a list of :class:`Check` records, one per criterion.
Regression constants are stored as JSON fixtures, written on the first
accepted run and compared to ``1e-9`` afterwards.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .capacities import _theta_operators, condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity
from .classes import full_trace, partial_trace
from .families import equivalence_cube, equivalence_family, nested_pairs, synthesis_geometries
from .grid import GridFunction, build_grid, build_mask, double_cube
from .poincare import PoincareQuery, _cone_samples, equivalence_report, poincare_constant, weak_poincare_constant
from .polynomials import (
    Polynomial,
    complement_part,
    degree_part,
    prime_part,
    project,
    projection_operator,
)
from .synthesis import check_synthesis_condition, run_synthesis, smooth_trace_input

__all__ = ["Check", "SUITES", "ALL_SUITES", "run_suite", "fixtures_dir"]

SUITES = ("analytic-oracles", "monotonicity", "equivalences", "cone", "synthesis")
ALL_SUITES = SUITES + ("hygiene",)
EQUIV_RATIOS = ("C_gamma", "theta_gamma", "sharp_condenser", "condenser_theta")
MONO_TOL = 1e-8
REG_RTOL = 1e-9


@dataclass
class Check:
    """Outcome of one acceptance criterion."""

    suite: str
    name: str
    passed: bool
    detail: str = ""
    value: float | None = None
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.suite}/{self.name}: {self.detail}"

    def as_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed, "detail": self.detail,
                "value": self.value}


def fixtures_dir() -> Path:
    env = os.environ.get("POLYCAP_FIXTURES")
    return Path(env) if env else Path(__file__).parent / "fixtures"


def _load_fixture(name: str, directory: Path | None) -> dict | None:
    path = (directory or fixtures_dir()) / f"{name}.json"
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _store_fixture(name: str, data: dict, directory: Path | None) -> None:
    d = directory or fixtures_dir()
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _close(a: float, b: float, rtol: float = REG_RTOL) -> bool:
    return math.isclose(a, b, rel_tol=rtol, abs_tol=0.0)


def _rel(value: float, target: float) -> float:
    return abs(value - target) / abs(target)


# ----------------------------------------------------------- analytic oracles


def _oracle_values(n1: int = 129, n2: int = 257) -> dict:
    Q = build_grid(1, n1)
    point = build_mask(Q, {"type": "point", "at": [0.5]})
    cube = build_mask(Q, {"type": "cube"})
    t = time.perf_counter()
    c_point = condenser_capacity(Q, point, 1).value
    dt = time.perf_counter() - t
    c_cube = condenser_capacity(Q, cube, 1).value
    g_cube = gamma_capacity(Q, full_trace(cube, 1), 1, 0).value
    Q2 = build_grid(1, n2)
    ends = build_mask(Q2, [0, n2 - 1])
    dirichlet = poincare_constant(PoincareQuery(Q2, partial_trace(ends, 1, 0), 1, 0, mode="hedberg")).value
    neumann = weak_poincare_constant(Q2, 0).value
    return {"condenser_point": c_point, "condenser_point_seconds": dt, "condenser_cube": c_cube,
            "gamma_cube": g_cube, "dirichlet": dirichlet, "neumann": neumann}


def analytic_oracles(**_) -> list:
    v = _oracle_values()
    s = "analytic-oracles"
    out = []
    e = _rel(v["condenser_point"], 2.0)
    out.append(Check(s, "condenser-point", e <= 0.05 and v["condenser_point_seconds"] < 1.0,
                     f"C = {v['condenser_point']:.5f} vs 2 (rel err {e:.2%}, {v['condenser_point_seconds']:.3f}s)",
                     v["condenser_point"]))
    e = _rel(v["condenser_cube"], 4.0)
    out.append(Check(s, "condenser-cube", e <= 0.05, f"C = {v['condenser_cube']:.5f} vs 4 (rel err {e:.2%})",
                     v["condenser_cube"]))
    e = _rel(v["gamma_cube"], 4.0)
    out.append(Check(s, "gamma-full-cube", e <= 0.05, f"Gamma = {v['gamma_cube']:.5f} vs 4 (rel err {e:.2%})",
                     v["gamma_cube"]))
    e = _rel(v["dirichlet"], 1 / math.pi)
    out.append(Check(s, "dirichlet-poincare", e <= 0.02,
                     f"C = {v['dirichlet']:.6f} vs 1/pi (rel err {e:.3%})", v["dirichlet"]))
    e = _rel(v["neumann"], 1 / math.pi)
    out.append(Check(s, "neumann-weak-poincare", e <= 0.02,
                     f"A = {v['neumann']:.6f} vs 1/pi (rel err {e:.3%})", v["neumann"]))
    return out


# --------------------------------------------------------------- monotonicity


def _le(a: float, b: float, tol: float = MONO_TOL) -> bool:
    return a <= b + tol * max(1.0, abs(b))


def _pair_values(Q, K1, K2, seed):
    t2 = theta_capacity(Q, full_trace(K2, 1), 1, 0, starts=16, seed=seed)
    # The witness for the larger set is admissible for the smaller one.
    extra = [t2.witness.values] if t2.witness is not None else []
    t1 = theta_capacity(Q, full_trace(K1, 1), 1, 0, starts=16, seed=seed, extra_starts=extra)
    vals = {}
    for tag, K, th in (("K1", K1, t1), ("K2", K2, t2)):
        vals[tag] = {
            "condenser": condenser_capacity(Q, K, 1).value,
            "sharp": sharp_capacity(Q, K, 1).value,
            "gamma": gamma_capacity(Q, full_trace(K, 1), 1, 0).value,
            "theta": th.value,
        }
    return vals


def monotonicity(seed: int = 0, map_fn=map, **_) -> list:
    s = "monotonicity"
    grids = [build_grid(1, 33, center=0.0, side=8.0), build_grid(2, 17, center=(0.0, 0.0), side=8.0)]
    jobs = []
    for i, Q in enumerate(grids):
        for K1, K2 in nested_pairs(Q, 10, seed + i, margin=2):
            jobs.append((Q, K1, K2))
    rows = list(map_fn(_pair_values, [j[0] for j in jobs], [j[1] for j in jobs], [j[2] for j in jobs],
                       [seed] * len(jobs)))
    out = []
    for cap in ("condenser", "sharp", "gamma", "theta"):
        bad = [i for i, r in enumerate(rows) if not _le(r["K1"][cap], r["K2"][cap])]
        out.append(Check(s, f"monotone-in-K:{cap}", not bad,
                         f"{len(rows) - len(bad)}/{len(rows)} nested pairs ordered" + (f", failing {bad}" if bad else "")))
    thetas = [r[t]["theta"] for r in rows for t in ("K1", "K2")]
    out.append(Check(s, "theta-at-most-one", all(t <= 1.0 for t in thetas), f"max Theta = {max(thetas):.4g}"))
    viol = [i for i, r in enumerate(rows) for t in ("K1", "K2") if not _le(r[t]["condenser"], r[t]["sharp"])]
    out.append(Check(s, "sharp-above-condenser", not viol, f"{2 * len(rows) - len(viol)}/{2 * len(rows)} sets"))

    # Orders: Gamma nonincreasing in k and nondecreasing in the trace order s.
    Q = grids[1]
    sets = [build_mask(Q, g) for g in ({"type": "point", "at": [0.0, 0.0]},
                                        {"type": "segment", "a": [-1.0, 0.0], "b": [1.0, 0.0]},
                                        {"type": "box", "lo": [-0.5, -0.5], "hi": [0.5, 0.5]})]
    bad_k, bad_s, txt_k, txt_s = [], [], [], []
    for j, K in enumerate(sets):
        cls = full_trace(K, 2)
        g0 = gamma_capacity(Q, cls, 2, 0).value
        g1 = gamma_capacity(Q, cls, 2, 1).value
        txt_k.append(f"{g1:.4g}<={g0:.4g}")
        if not _le(g1, g0):
            bad_k.append(j)
        gs = [gamma_capacity(Q, partial_trace(K, 2, o), 2, 0).value for o in (0, 1)]
        txt_s.append(f"{gs[0]:.4g}<={gs[1]:.4g}")
        if not _le(gs[0], gs[1]):
            bad_s.append(j)
    out.append(Check(s, "gamma-nonincreasing-in-k", not bad_k, "; ".join(txt_k)))
    out.append(Check(s, "gamma-nondecreasing-in-trace-order", not bad_s, "; ".join(txt_s)))
    return out


# --------------------------------------------------------------- equivalences


def _equivalence_reports(map_fn=map, seed: int = 0, Q=None):
    Q = equivalence_cube() if Q is None else Q
    fam = equivalence_family(Q)
    reps = {}
    for m in (1, 2):
        cfg = {"m": m, "k": 0, "p": 2.0, "starts": 32, "seed": seed}
        reps[f"m{m}"] = equivalence_report(Q, fam, cfg, family_id=f"m{m}", map_fn=map_fn)
    return reps


def _fixture_constants(reps) -> dict:
    return {key: {name: {"lower": r.constants[name]["lower"], "upper": r.constants[name]["upper"]}
                  for name in EQUIV_RATIOS} for key, r in reps.items()}


def equivalences(map_fn=map, seed: int = 0, fixtures: Path | None = None, **_) -> list:
    s = "equivalences"
    t = time.perf_counter()
    reps = _equivalence_reports(map_fn, seed)
    dt = time.perf_counter() - t
    out = []
    for key, r in reps.items():
        for name in EQUIV_RATIOS:
            c = r.constants[name]
            out.append(Check(s, f"{key}:{name}", c["spread"] <= 10.0,
                             f"[{c['lower']:.4g}, {c['upper']:.4g}] spread {c['spread']:.3g} (max 10)", c["spread"]))
    out.append(Check(s, "runtime", dt < 300.0, f"{dt:.1f}s (max 300s)", dt))
    out += _regression(s, "equivalences", _fixture_constants(reps), fixtures, out)
    return out


def _regression(suite: str, name: str, current: dict, fixtures, checks: list) -> list:
    ref = _load_fixture(name, fixtures)
    if ref is None:
        if all(c.passed for c in checks):
            _store_fixture(name, current, fixtures)
            return [Check(suite, "regression", True, "fixture frozen on this accepted run")]
        return [Check(suite, "regression", False, "no fixture and the run was not accepted")]
    bad = [k for k, a, b in _leaves(current, ref) if not (isinstance(a, float) and isinstance(b, float) and _close(a, b))]
    return [Check(suite, "regression", not bad, "reproduces frozen fixture to 1e-9" if not bad else f"drift in {bad[:4]}")]


def _leaves(a, b, prefix=""):
    if isinstance(b, dict):
        for k in b:
            yield from _leaves(a.get(k) if isinstance(a, dict) else None, b[k], f"{prefix}{k}.")
    else:
        yield prefix.rstrip("."), (float(a) if isinstance(a, (int, float)) else a), float(b)


# ----------------------------------------------------------------------- cone


def _cone_member(Q, K, seed):
    cls = full_trace(K, 2, nonnegative=True)
    t1 = theta_capacity(Q, cls, 2, 1, alpha=4.0, starts=16, seed=seed)
    t0 = theta_capacity(Q, cls, 2, 0, alpha=1.0, starts=16, seed=seed)
    cap2 = condenser_capacity(Q, K, 2).value
    samples = _cone_samples(Q, K, cap2, 2.0, 64, seed)
    return {"theta_k1": t1.value, "theta_k0": t0.value, "feasible": bool(t1.feasible and t0.feasible),
            "A": samples["A"]}


def cone(map_fn=map, seed: int = 0, fixtures: Path | None = None, **_) -> list:
    s = "cone"
    Q = equivalence_cube()
    fam = equivalence_family(Q)
    rows = list(map_fn(_cone_member, [Q] * len(fam), fam, [seed] * len(fam)))
    ratios = [r["theta_k1"] / r["theta_k0"] if r["theta_k0"] > 0 else math.inf for r in rows]
    c = min(ratios)
    ok = c > 0 and all(r["feasible"] for r in rows)
    out = [Check(s, "theta-k1-over-k0", ok,
                 f"fitted c = {c:.4g} over {len(rows)} members (upper-bound values on both sides)", c)]
    As = [r["A"] for r in rows]
    A = max(As)
    spread = A / min(As) if min(As) > 0 else math.inf
    out.append(Check(s, "nonnegative-poincare-single-A", math.isfinite(A) and spread <= 10.0,
                     f"A = {A:.4g}, member spread {spread:.3g} (64 samples per member)", A))
    ref = _load_fixture("cone", fixtures)
    if ref is not None:
        viol = [i for i, a in enumerate(As) if a > ref["A"] * (1 + REG_RTOL)]
        out.append(Check(s, "samples-within-frozen-A", not viol,
                         f"frozen A = {ref['A']:.6g}" + (f", violating members {viol}" if viol else "")))
    out += _regression(s, "cone", {"c": c, "A": A}, fixtures, out)
    return out


# ------------------------------------------------------------------ synthesis


def synthesis_ambient(dim: int):
    """Doubled unit cube used by the synthesis suite (``h = 1/512`` in 1D, ``1/64`` in 2D)."""
    n = 513 if dim == 1 else 65
    return double_cube(build_grid(dim, n, center=0.5, side=1.0))


def synthesis_cases():
    for dim in (1, 2):
        for name, geom in synthesis_geometries(dim).items():
            for m, nonneg in ((1, False), (2, False), (2, True)):
                yield dim, name, geom, m, nonneg


def _synthesis_case(dim, name, geom, m, nonneg):
    amb = synthesis_ambient(dim)
    K = build_mask(amb, geom)
    u = smooth_trace_input(amb, geom, m)
    try:
        reps = run_synthesis(u, K, m, nonnegative=nonneg)
    except (AssertionError, RuntimeError) as exc:
        return {"error": str(exc)}
    return {"costs": [r.total_cost for r in reps], "chain": [r.chain_ok for r in reps],
            "partial": [r.partial for r in reps], "covered": [r.covered for r in reps],
            "max_ratio": [r.max_ratio for r in reps], "multiplicity": [r.multiplicity for r in reps]}


def condition_family(Q0):
    pts = ([0.0], [1.0], [-2.5], [-1.0, 1.0], [-2.0, 0.5, 2.5])
    return [build_mask(Q0, {"type": "union", "parts": [{"type": "point", "at": [x]} for x in p]}) for p in pts]


def synthesis(map_fn=map, seed: int = 0, fixtures: Path | None = None, **_) -> list:
    s = "synthesis"
    t = time.perf_counter()
    cases = list(synthesis_cases())
    rows = list(map_fn(_synthesis_case, *zip(*cases)))
    out = []
    for (dim, name, _, m, nonneg), r in zip(cases, rows):
        tag = f"N{dim}:{name}:m{m}" + (":nonnegative" if nonneg else "")
        if "error" in r:
            out.append(Check(s, tag, False, f"assertion failed: {r['error']}"))
            continue
        c = r["costs"]
        dec = all(b < a for a, b in zip(c, c[1:]))
        note = " (partial: infeasible cubes skipped)" if any(r["partial"]) else ""
        out.append(Check(s, tag, dec and all(r["chain"]),
                         "costs " + ", ".join(f"{x:.4g}" for x in c)
                         + ("" if all(r["chain"]) else " chain bound violated") + note, c[-1], r))
    Q0 = build_grid(1, 33, center=0.0, side=8.0)
    rep = check_synthesis_condition(Q0, condition_family(Q0), 1, seed=seed, map_fn=map_fn)
    A = rep["A"]
    cond = [Check(s, "condition-single-A", math.isfinite(A) and not rep["violations"],
                  f"A = {A:.4g} over {len(rep['rows'])} (set, pin) pairs, cap {rep['cap']:g}", A)]
    out += cond
    out += _regression(s, "synthesis_condition", {"A": A}, fixtures, cond)
    dt = time.perf_counter() - t
    out.append(Check(s, "runtime", dt < 600.0, f"{dt:.1f}s (max 600s)", dt))
    return out


# -------------------------------------------------------------------- hygiene


def _projection_identities(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for dim, n in ((1, 33), (2, 17)):
        g = build_grid(dim, n)
        for r in (1, 2):
            R, E, _ = projection_operator(g, r)
            u, v = rng.standard_normal(g.size), rng.standard_normal(g.size)
            a, b = rng.standard_normal(2)
            c = R @ u
            scale = max(1.0, np.abs(c).max())
            worst = max(worst, np.abs(R @ (E @ c) - c).max() / scale)
            worst = max(worst, np.abs(R @ (a * u + b * v) - (a * c + b * (R @ v))).max() / scale)
            _, _, Pk, Pco = _theta_operators(g, r + 1, 0)
            worst = max(worst, np.abs(Pk @ u + Pco @ u - E @ c).max() / scale)
            pr = project(GridFunction(g, u), r)
            worst = max(worst, np.abs(pr.polynomial.coeffs - c).max() / scale)
            P = Polynomial(dim, r, c, g.center)
            for k in range(r + 1):
                s = degree_part(P, k) + complement_part(P, k)
                worst = max(worst, np.abs(s.coeffs - P.coeffs).max() / scale)
                if k >= 1:
                    q = degree_part(P, k) - prime_part(P, k) - degree_part(P, 0)
                    worst = max(worst, np.abs(q.coeffs).max() / scale)
    return worst


def hygiene(map_fn=map, seed: int = 0, equivalence_refinement: bool = True, **_) -> list:
    s = "hygiene"
    err = _projection_identities(seed)
    out = [Check(s, "projection-identities", err <= 1e-10, f"max relative defect {err:.2e} (max 1e-10)", err)]
    base = _oracle_values(129, 257)
    fine = _oracle_values(257, 513)
    for key in ("condenser_point", "condenser_cube", "gamma_cube", "dirichlet", "neumann"):
        d = _rel(fine[key], base[key])
        out.append(Check(s, f"drift:{key}", d <= 0.10, f"{base[key]:.5g} -> {fine[key]:.5g} ({d:.2%})", d))
    if equivalence_refinement:
        coarse = _fixture_constants(_equivalence_reports(map_fn, seed))
        refined = _fixture_constants(_equivalence_reports(map_fn, seed, equivalence_cube(65, 16.0)))
        for key, consts in coarse.items():
            for name, c in consts.items():
                d = max(_rel(refined[key][name][b], c[b]) for b in ("lower", "upper"))
                out.append(Check(s, f"drift:{key}:{name}", d <= 0.10, f"interval drift {d:.2%}", d))
    return out


_SUITES = {
    "analytic-oracles": analytic_oracles,
    "monotonicity": monotonicity,
    "equivalences": equivalences,
    "cone": cone,
    "synthesis": synthesis,
    "hygiene": hygiene,
}


def run_suite(name: str, map_fn=map, seed: int = 0, fixtures: Path | None = None, **kw) -> list:
    """Run one acceptance suite and return its checks."""
    if name not in _SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(_SUITES)}")
    return _SUITES[name](map_fn=map_fn, seed=seed, fixtures=fixtures, **kw)
