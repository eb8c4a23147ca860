import numpy as np
import pytest

from polycap.calculus import gradient_energy
from polycap.classes import partial_trace
from polycap.grid import build_grid, build_mask, double_cube
from polycap.synthesis import (
    build_lattice, check_synthesis_condition, gray_offsets, partition_of_unity, run_synthesis, smooth_trace_input,
)


def test_gray_offsets_change_one_axis_at_a_time():
    offs = gray_offsets(3, 8)
    assert len(offs) == 8 and len(set(offs)) == 8
    for a, b in zip(offs, offs[1:]):
        assert sum(x != y for x, y in zip(a, b)) == 1


def test_lattice_rejects_bad_sides():
    amb = double_cube(build_grid(1, 33))
    with pytest.raises(ValueError):
        build_lattice(amb, 0.1)
    with pytest.raises(ValueError):
        build_lattice(amb, 2 * amb.h)


def test_lattice_flags_cubes_meeting_the_set():
    amb = double_cube(build_grid(2, 33))
    K = build_mask(amb, {"type": "point", "at": [0.5, 0.5]})
    _, cubes, flagged = build_lattice(amb, 0.25, K)
    assert len(cubes) > len(flagged) >= 1
    assert len(flagged) == 4  # the point is a lattice vertex


@pytest.mark.parametrize("dim", [1, 2])
def test_partition_of_unity_sums_to_one(dim):
    amb = double_cube(build_grid(dim, 33))
    cfg, cubes, _ = build_lattice(amb, 0.25)
    total = np.zeros(amb.shape)
    for _, lo, hi, vals in partition_of_unity(cfg, cubes):
        sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        total[sl] += vals
        assert np.all(vals >= 0)
    r = cfg.step // 4
    inner = tuple(slice(r, amb.n - r) for _ in range(dim))
    np.testing.assert_allclose(total[inner], 1.0, atol=1e-12)
    assert np.all(total <= 1 + 1e-12)


@pytest.mark.parametrize("m", [1, 2])
def test_smooth_input_lies_in_trace_class(m):
    amb = double_cube(build_grid(1, 129, center=0.5))
    geom = {"type": "cantor", "depth": 1}
    K = build_mask(amb, geom)
    u = smooth_trace_input(amb, geom, m)
    zero = partial_trace(K, m, m - 1).zero_set(amb)
    assert np.all(u.values[zero] == 0)
    assert np.isfinite(gradient_energy(u, m)) and gradient_energy(u, m) > 0


def test_point_cost_decreases_in_1d():
    amb = double_cube(build_grid(1, 257, center=0.5))
    geom = {"type": "point", "at": [0.5]}
    K = build_mask(amb, geom)
    reps = run_synthesis(smooth_trace_input(amb, geom, 1), K, 1)
    costs = [r.total_cost for r in reps]
    assert [r.delta for r in reps] == [0.25, 0.125, 0.0625]
    assert costs[0] > costs[1] > costs[2] > 0
    assert all(r.chain_ok and r.covered for r in reps)
    zero = K.flags
    for r in reps:
        assert np.all(np.abs(r.result[zero]) < 1e-12)


def test_synthesis_rejects_input_outside_class():
    amb = double_cube(build_grid(1, 129, center=0.5))
    K = build_mask(amb, {"type": "point", "at": [0.5]})
    u = smooth_trace_input(amb, {"type": "point", "at": [0.25]}, 1)
    with pytest.raises((ValueError, AssertionError)):
        run_synthesis(u, K, 1)


def test_condition_ratios_are_finite():
    Q0 = build_grid(1, 33, center=0.0, side=8.0)
    fam = [build_mask(Q0, {"type": "point", "at": [0.0]}), build_mask(Q0, {"type": "point", "at": [1.0]})]
    rep = check_synthesis_condition(Q0, fam, 1, pins=2)
    assert len(rep["rows"]) == 4
    assert np.isfinite(rep["A"]) and rep["A"] >= 0
