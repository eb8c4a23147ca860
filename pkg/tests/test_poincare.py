import math

import numpy as np
import pytest

from polycap.classes import full_trace, partial_trace, unconstrained
from polycap.families import equivalence_cube, equivalence_geometries
from polycap.grid import build_grid, build_mask
from polycap.poincare import (
    PoincareQuery, equivalence_report, poincare_constant, sample_functions, weak_poincare_constant,
)


def test_dirichlet_constant_is_one_over_pi():
    g = build_grid(1, 257)
    ends = build_mask(g, [0, 256])
    r = poincare_constant(PoincareQuery(g, partial_trace(ends, 1, 0), 1, 0, mode="hedberg"))
    assert r.value == pytest.approx(1 / math.pi, rel=0.02)
    assert r.bound_kind == "exact-eigen"


def test_neumann_weak_constant_is_one_over_pi():
    r = weak_poincare_constant(build_grid(1, 257), 0)
    assert r.value == pytest.approx(1 / math.pi, rel=0.02)


def test_half_interval_dirichlet():
    # vanishing only at the midpoint: two mixed problems on halves, constant 1/pi as well
    g = build_grid(1, 257)
    mid = build_mask(g, {"type": "point", "at": [0.5]})
    r = poincare_constant(PoincareQuery(g, partial_trace(mid, 1, 0), 1, 0, mode="hedberg"))
    assert r.value == pytest.approx(1 / math.pi, rel=0.02)


def test_unconstrained_class_is_unbounded():
    g = build_grid(1, 17)
    r = poincare_constant(PoincareQuery(g, unconstrained(1), 1, 0))
    assert r.value == math.inf


def test_larger_zero_set_gives_smaller_constant():
    g = build_grid(2, 17)
    small = build_mask(g, {"type": "point", "at": [0.5, 0.5]})
    big = build_mask(g, {"type": "segment", "a": [0.25, 0.5], "b": [0.75, 0.5]})
    c = [poincare_constant(PoincareQuery(g, full_trace(K, 1), 1, 0)).value for K in (small, big)]
    assert c[1] <= c[0]


def test_sampled_route_bounded_by_exact():
    g = build_grid(1, 33)
    K = build_mask(g, {"type": "point", "at": [0.5]})
    exact = poincare_constant(PoincareQuery(g, full_trace(K, 1), 1, 0)).value
    samp = poincare_constant(PoincareQuery(g, full_trace(K, 1), 1, 0, exact=False, samples=16))
    assert samp.bound_kind in ("lower-bound", "sampled")
    assert samp.value <= exact * (1 + 1e-6)


def test_query_validation():
    g = build_grid(2, 9)
    cls = unconstrained(1)
    with pytest.raises(ValueError):
        PoincareQuery(g, cls, 1, 1)
    with pytest.raises(ValueError):
        PoincareQuery(g, cls, 1, 0, mode="other")
    with pytest.raises(ValueError):
        PoincareQuery(g, cls, 1, 0, p=3.0, q=4.0)
    PoincareQuery(g, cls, 1, 0, q=4.0)


def test_sample_functions_vanish_on_zero_set():
    g = build_grid(2, 17)
    zero = build_mask(g, {"type": "segment", "a": [0.2, 0.2], "b": [0.8, 0.6]}).flags
    fs = sample_functions(g, zero, 12, seed=3, nonnegative=True)
    assert len(fs) > 0
    for v in fs:
        assert np.all(v[zero] == 0) and np.all(v >= 0) and np.abs(v).max() == pytest.approx(1.0)
    again = sample_functions(g, zero, 12, seed=3, nonnegative=True)
    assert all(np.array_equal(a, b) for a, b in zip(fs, again))


def test_equivalence_report_small_family():
    Q = equivalence_cube(17, 8.0)
    fam = [build_mask(Q, g) for g in equivalence_geometries()[:4]]
    rep = equivalence_report(Q, fam, {"m": 1, "k": 0, "p": 2.0, "starts": 4})
    assert len(rep.members) == 4
    c = rep.constants["sharp_condenser"]
    assert 1.0 <= c["lower"] <= c["upper"]
    again = equivalence_report(Q, fam, {"m": 1, "k": 0, "p": 2.0, "starts": 4},
                               reference={k: {"lower": v["lower"], "upper": v["upper"]}
                                          for k, v in rep.constants.items()})
    assert all(v for k, v in again.verdicts.items() if k.startswith("regression:"))


def test_equivalence_needs_three_members():
    Q = equivalence_cube(17, 8.0)
    with pytest.raises(ValueError):
        equivalence_report(Q, [build_mask(Q, {"type": "point", "at": [0.0, 0.0]})] * 2, {"m": 1})
