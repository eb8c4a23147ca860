import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polycap.capacities import (
    condenser_capacity, gamma_capacity, sharp_capacity, theta_capacity, theta_quotient, theta_test_set_check,
)
from polycap.classes import FunctionClassSpec, full_trace, partial_trace, unconstrained
from polycap.families import nested_pairs
from polycap.grid import build_grid, build_mask


@pytest.fixture(scope="module")
def line():
    return build_grid(1, 129)


def test_condenser_point_is_two(line):
    K = build_mask(line, {"type": "point", "at": [0.5]})
    r = condenser_capacity(line, K, 1)
    assert r.value == pytest.approx(2.0, rel=1e-9)
    assert r.bound_kind == "exact-qp"


def test_condenser_of_two_points(line):
    K = build_mask(line, {"type": "union", "parts": [{"type": "point", "at": [0.25]}, {"type": "point", "at": [0.75]}]})
    assert condenser_capacity(line, K, 1).value == pytest.approx(8 / 3, rel=1e-9)


def test_condenser_cube_is_four(line):
    assert condenser_capacity(line, build_mask(line, {"type": "cube"}), 1).value == pytest.approx(4.0, rel=1e-9)


def test_second_order_condenser_of_point(line):
    # two cubic Hermite ramps 3t^2 - 2t^3 over distance 1, each of energy 12
    K = build_mask(line, {"type": "point", "at": [0.5]})
    assert condenser_capacity(line, K, 2).value == pytest.approx(24.0, rel=0.05)


def test_gamma_full_cube(line):
    r = gamma_capacity(line, full_trace(build_mask(line, {"type": "cube"}), 1), 1, 0)
    assert r.value == pytest.approx(4.0, rel=0.05)
    assert r.bound_kind == "exact-eigen"


def test_empty_set_has_zero_capacity(line):
    K = build_mask(line, {"type": "nodes", "indices": []})
    assert condenser_capacity(line, K, 1).value == 0.0
    assert sharp_capacity(line, K, 1).value == 0.0
    assert gamma_capacity(line, full_trace(K, 1), 1, 0).value == pytest.approx(0.0, abs=1e-12)


def test_condenser_lp_route_close_to_quadratic():
    g = build_grid(1, 33)
    K = build_mask(g, {"type": "point", "at": [0.5]})
    # 1D capacity of a point at distance 1 from both ends: 2 for every p
    assert condenser_capacity(g, K, 1, p=3.0).value == pytest.approx(2.0, rel=1e-3)


def test_sharp_dominates_condenser(line):
    for geom in ({"type": "point", "at": [0.5]}, {"type": "box", "lo": [0.2], "hi": [0.4]}):
        K = build_mask(line, geom)
        assert sharp_capacity(line, K, 1).value >= condenser_capacity(line, K, 1).value - 1e-12


@settings(max_examples=8)
@given(st.integers(0, 10**6))
def test_capacities_monotone_in_the_set(seed):
    g = build_grid(2, 9, center=(0.0, 0.0), side=8.0)
    (K1, K2), = nested_pairs(g, 1, seed, margin=2)
    for f in (lambda K: condenser_capacity(g, K, 1).value, lambda K: sharp_capacity(g, K, 1).value,
              lambda K: gamma_capacity(g, full_trace(K, 1), 1, 0).value):
        assert f(K1) <= f(K2) + 1e-8 * max(1.0, f(K2))


def test_gamma_nonincreasing_in_k():
    g = build_grid(1, 33, center=0.0, side=8.0)
    K = build_mask(g, {"type": "box", "lo": [-1.0], "hi": [1.0]})
    cls = full_trace(K, 2)
    assert gamma_capacity(g, cls, 2, 1).value <= gamma_capacity(g, cls, 2, 0).value + 1e-8


def test_trace_order_monotone():
    g = build_grid(1, 33, center=0.0, side=8.0)
    K = build_mask(g, {"type": "point", "at": [0.0]})
    lo = gamma_capacity(g, partial_trace(K, 2, 0), 2, 0).value
    hi = gamma_capacity(g, partial_trace(K, 2, 1), 2, 0).value
    assert lo <= hi + 1e-8


def test_theta_bounded_by_one_and_witness_admissible():
    g = build_grid(1, 33, center=0.0, side=8.0)
    K = build_mask(g, {"type": "point", "at": [0.0]})
    r = theta_capacity(g, full_trace(K, 1), 1, 0, starts=8)
    assert 0.0 <= r.value <= 1.0
    if r.witness is not None and r.value < 1.0:
        chk = theta_test_set_check(r.witness, 1, 0, 4.0)
        assert chk["ratio_ok"] and chk["residual_ok"]
        assert theta_quotient(r.witness, 1, 0) == pytest.approx(r.value, rel=1e-6)


def test_theta_of_unconstrained_class_vanishes():
    g = build_grid(1, 17, center=0.0, side=8.0)
    r = theta_capacity(g, unconstrained(1), 1, 0, starts=4)
    assert r.value == pytest.approx(0.0, abs=1e-10)


def test_order_validation():
    g = build_grid(1, 17)
    K = build_mask(g, {"type": "point", "at": [0.5]})
    with pytest.raises(ValueError):
        gamma_capacity(g, full_trace(K, 1), 1, 1)
    with pytest.raises(ValueError):
        FunctionClassSpec("partial", m=1, mask=K, order=1)
    with pytest.raises(ValueError):
        FunctionClassSpec("full", m=1)
