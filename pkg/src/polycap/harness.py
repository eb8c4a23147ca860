"""Run configured experiments and write JSON, CSV and timing outputs."""

from __future__ import annotations

import contextlib
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .capacities import condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity
from .classes import FunctionClassSpec
from .config import ExperimentConfig, load_schema
from .grid import build_grid, build_mask, double_cube
from .poincare import PoincareQuery, equivalence_report, poincare_constant
from .polynomials import poly_deviation
from .synthesis import check_synthesis_condition, run_synthesis, smooth_trace_input

__all__ = ["CSV_COLUMNS", "run_experiment", "write_outputs", "worker_map", "default_workers"]

CSV_COLUMNS = ("item_id", "experiment", "label", "quantity", "value", "bound_kind", "status")
TWO_SIDED = ("C_gamma", "theta_gamma", "sharp_condenser", "condenser_theta")
_KINDS = {
    "exact-eigen": "exact-eigen",
    "exact-qp": "exact-qp",
    "upper-bound": "upper-bound",
    "upper-bound-multistart": "upper-bound",
    "lower-bound": "lower-bound",
    "sampled": "sampled",
}


def default_workers() -> int:
    env = os.environ.get("POLYCAP_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@contextlib.contextmanager
def worker_map(workers: int | None = None):
    """Order-preserving ``map`` over a process pool (plain ``map`` for one worker)."""
    n = default_workers() if workers is None else max(1, int(workers))
    if n == 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=n) as pool:
        yield pool.map


def _num(x):
    """JSON-safe number: non-finite values become strings."""
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


def _result(quantity, value, kind, status="ok", label=None) -> dict:
    r = {"quantity": quantity, "value": _num(value), "bound_kind": _KINDS.get(kind, kind), "status": status}
    if label:
        r["label"] = label
    return r


def _grid(spec: dict):
    return build_grid(spec["dim"], spec["n"], spec.get("center"), spec.get("side", 1.0))


def _class(data: dict, K, m: int) -> FunctionClassSpec:
    c = data.get("class", {})
    kind = c.get("kind", "full")
    if kind == "unconstrained":
        return FunctionClassSpec("unconstrained", m=m, nonnegative=c.get("nonnegative", False))
    return FunctionClassSpec(kind, m=m, mask=K, order=c.get("order", m - 1 if kind == "partial" else 0),
                             rho=c.get("rho", 1), nonnegative=c.get("nonnegative", False))


# ------------------------------------------------------------------- items


def _capacity_item(data: dict, item: dict) -> tuple:
    t = time.perf_counter()
    Q = _grid(data["grid"])
    P = data.get("params", {})
    m, k, p, seed = P.get("m", 1), P.get("k", 0), P.get("p", 2.0), data.get("seed", 0)
    K = build_mask(Q, item["geometry"])
    cls = _class(data, K, m)
    res = []
    for q in P.get("quantities", ["gamma", "condenser"]):
        if q == "gamma":
            r = gamma_capacity(Q, cls, m, k, p, starts=P.get("starts", 8), seed=seed)
        elif q == "theta":
            r = theta_capacity(Q, cls, m, k, p, alpha=P.get("alpha", 4.0), starts=P.get("starts", 32), seed=seed)
        elif q == "condenser":
            r = condenser_capacity(Q, K, m, p)
        else:
            r = sharp_capacity(Q, K, m, p, rho=P.get("rho", 1))
        res.append(_result(q, r.value, r.bound_kind, "ok" if r.feasible else "infeasible"))
    return {"set": item["geometry"], "nodes": K.count}, res, time.perf_counter() - t


def _poincare_item(data: dict, item: dict) -> tuple:
    t = time.perf_counter()
    Q = _grid(data["grid"])
    P = data.get("params", {})
    m = P.get("m", 1)
    K = build_mask(Q, item["geometry"])
    q = PoincareQuery(Q, _class(data, K, m), m, P.get("k", 0), P.get("p", 2.0), P.get("p0", P.get("p", 2.0)),
                      P.get("q", P.get("p", 2.0)), P.get("mode", "two-term"), P.get("c0", 2.0),
                      P.get("samples", 64), data.get("seed", 0))
    r = poincare_constant(q)
    status = "ok" if math.isfinite(r.value) else "unbounded"
    return {"set": item["geometry"], "nodes": K.count}, [_result("poincare", r.value, r.bound_kind, status)], \
        time.perf_counter() - t


def _synthesis_item(data: dict, item: dict) -> tuple:
    t = time.perf_counter()
    P = data.get("params", {})
    m = P.get("m", 1)
    amb = double_cube(_grid(data["grid"]))
    geom = item["geometry"]
    K = build_mask(amb, geom)
    nonneg = data.get("class", {}).get("nonnegative", False)
    u = smooth_trace_input(amb, geom, m)
    reps = run_synthesis(u, K, m, P.get("p", 2.0), tuple(P.get("deltas", (0.25, 0.125, 0.0625))),
                         rho=P.get("rho", 1), width=P.get("width", 0.25), nonnegative=nonneg)
    res = []
    for r in reps:
        lab = f"delta={r.delta:g}"
        st = "partial" if r.partial else "ok"
        res.append(_result("total_cost", r.total_cost, "exact-qp", st, lab))
        res.append(_result("max_ratio", r.max_ratio, "exact-qp", st, lab))
        res.append(_result("chain_rhs", r.chain_rhs, "derived", "ok" if r.chain_ok else "violated", lab))
        res.append(_result("multiplicity", r.multiplicity, "derived", st, lab))
    costs = [r.total_cost for r in reps]
    diag = {"set": geom, "nodes": K.count,
            "decreasing": all(b < a for a, b in zip(costs, costs[1:])),
            "chain_ok": all(r.chain_ok for r in reps), "covered": [r.covered for r in reps]}
    return diag, res, time.perf_counter() - t


def _deviation_item(data: dict, item: dict) -> tuple:
    t = time.perf_counter()
    P = data.get("params", {})
    pts = np.asarray(item["points"], float)
    r = poly_deviation(pts, P.get("k", 1), P.get("norm", "l2"), starts=P.get("starts", 32), seed=data.get("seed", 0))
    res = [_result("deviation", r.value, r.bound_kind), _result("deviation_lower", r.lower_bound, "lower-bound")]
    return {"points": len(pts)}, res, time.perf_counter() - t


_ITEMS = {"capacity": _capacity_item, "poincare": _poincare_item, "synthesis": _synthesis_item,
          "deviation": _deviation_item}


# ------------------------------------------------------------ experiments


def _items_record(data, outs):
    items, timing = [], {}
    for item, (diag, res, dt) in zip(data["items"], outs):
        rec = {"item_id": item["id"], "results": res, "diagnostics": _clean(diag)}
        if "label" in item:
            rec["label"] = item["label"]
        items.append(rec)
        timing[item["id"]] = dt
    return items, timing


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating, int, np.integer)) and not isinstance(obj, bool):
        return _num(obj) if isinstance(obj, (float, np.floating)) else int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _equivalence(data: dict, map_fn, fixture: Path | None) -> tuple:
    t = time.perf_counter()
    Q = _grid(data["grid"])
    P = data.get("params", {})
    fam = [build_mask(Q, it["geometry"]) for it in data["items"]]
    cfg = {"m": P.get("m", 1), "k": P.get("k", 0), "p": P.get("p", 2.0), "alpha": P.get("alpha", 4.0),
           "rho": P.get("rho", 1), "c0": P.get("c0", 2.0), "starts": P.get("starts", 32), "seed": data.get("seed", 0)}
    ref = json.loads(fixture.read_text()) if fixture is not None and fixture.exists() else None
    rep = equivalence_report(Q, fam, cfg, data.get("name", "family"), reference=ref,
                             max_spread=P.get("max_spread", 10.0), map_fn=map_fn)
    p = cfg["p"]
    items = []
    for it, mem in zip(data["items"], rep.members):
        kinds = mem["bound_kinds"]
        res = [
            _result("gamma", mem["gamma"], kinds["gamma"]),
            _result("gamma_inv_root", mem["gamma"] ** (-1 / p) if mem["gamma"] > 0 else math.inf, "derived"),
            _result("poincare", mem["poincare"], kinds["poincare"]),
            _result("theta", mem["theta"], kinds["theta"]),
            _result("hedberg", mem["hedberg"], kinds["hedberg"]),
            _result("condenser", mem["condenser"], kinds["condenser"]),
            _result("sharp", mem["sharp"], kinds["sharp"]),
        ]
        for name, v in mem.get("ratios", {}).items():
            res.append(_result(f"ratio:{name}", v, "derived"))
        items.append({"item_id": it["id"], "results": res, "diagnostics": {"nodes": mem["nodes"],
                                                                           "degenerate": mem["degenerate"]}})
    verdicts = {f"spread:{n}": rep.verdicts[n] for n in TWO_SIDED}
    verdicts.update({k: v for k, v in rep.verdicts.items() if k.startswith("regression:")})
    summary = {"constants": _clean(rep.constants), "max_spread": P.get("max_spread", 10.0)}
    current = {n: {"lower": rep.constants[n]["lower"], "upper": rep.constants[n]["upper"]} for n in TWO_SIDED}
    if fixture is not None and ref is None and all(verdicts.values()):
        fixture.parent.mkdir(parents=True, exist_ok=True)
        fixture.write_text(json.dumps(current, indent=2, sort_keys=True) + "\n")
        summary["fixture"] = "frozen"
    return items, summary, verdicts, {"total": time.perf_counter() - t}


def _condition(data: dict, map_fn) -> tuple:
    t = time.perf_counter()
    Q0 = _grid(data["grid"])
    P = data.get("params", {})
    fam = [build_mask(Q0, it["geometry"]) for it in data["items"]]
    rep = check_synthesis_condition(Q0, fam, P.get("m", 1), P.get("k", 0), P.get("p", 2.0), P.get("alpha", 4.0),
                                    P.get("rho", 1), P.get("pins", 4), data.get("seed", 0), P.get("cap", 10.0),
                                    map_fn=map_fn)
    npins = P.get("pins", 4)
    items = []
    for i, it in enumerate(data["items"]):
        res = []
        for j, row in enumerate(rep["rows"][i * npins:(i + 1) * npins]):
            lab = f"pin={j}"
            res.append(_result("theta_full", row["theta_full"], "upper-bound", label=lab))
            res.append(_result("theta_partial", row["theta_partial"], "upper-bound", label=lab))
            res.append(_result("ratio", row["ratio"], "derived", "ok" if row["ratio"] <= rep["cap"] else "violation",
                               lab))
        items.append({"item_id": it["id"], "results": res, "diagnostics": {}})
    summary = {"A": _num(rep["A"]), "cap": rep["cap"], "violations": len(rep["violations"])}
    return items, summary, {"cap": not rep["violations"]}, {"total": time.perf_counter() - t}


def run_experiment(config: ExperimentConfig, map_fn=map, fixture: Path | None = None) -> tuple:
    """Execute ``config``; returns ``(record, timing)``.

    The record is deterministic for equal configs; wall-clock timing is
    returned separately.
    """
    data = config.data
    exp = config.experiment
    t = time.perf_counter()
    if exp == "equivalence":
        items, summary, verdicts, timing = _equivalence(data, map_fn, fixture)
    elif exp == "synthesis-condition":
        items, summary, verdicts, timing = _condition(data, map_fn)
    else:
        fn = _ITEMS[exp]
        outs = list(map_fn(fn, [data] * len(data["items"]), data["items"]))
        items, timing = _items_record(data, outs)
        summary, verdicts = {}, {}
        if exp == "synthesis":
            verdicts = {f"{it['item_id']}:decreasing": it["diagnostics"]["decreasing"] for it in items}
            verdicts.update({f"{it['item_id']}:chain": it["diagnostics"]["chain_ok"] for it in items})
    timing = {"items": timing, "wall_seconds": time.perf_counter() - t}
    record = {
        "config_digest": config.digest,
        "experiment": exp,
        "name": data.get("name", exp),
        "seed": config.seed,
        "grid": data["grid"],
        "items": items,
        "summary": summary,
        "verdicts": verdicts,
        "passed": all(verdicts.values()),
    }
    return record, timing


def csv_rows(record: dict) -> list:
    rows = []
    for it in record["items"]:
        for r in it["results"]:
            rows.append([it["item_id"], record["experiment"], r.get("label", it.get("label", "")), r["quantity"],
                         "" if r["value"] is None else repr(r["value"]) if isinstance(r["value"], float) else r["value"],
                         r["bound_kind"], r["status"]])
    return rows


def write_outputs(record: dict, timing: dict, out_dir: Path, stem: str, fmt: str = "both") -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "both"):
        p = out_dir / f"{stem}.json"
        p.write_text(json.dumps(record, indent=2, sort_keys=True, allow_nan=False) + "\n")
        written.append(p)
    if fmt in ("csv", "both"):
        p = out_dir / f"{stem}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            w.writerows(csv_rows(record))
        written.append(p)
    p = out_dir / f"{stem}.timing.json"
    p.write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    written.append(p)
    return written


def record_schema() -> dict:
    return load_schema("record")
