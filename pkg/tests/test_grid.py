import numpy as np
import pytest
from hypothesis import given, strategies as st

from polycap.grid import (
    CompactMask, GridFunction, build_grid, build_mask, cantor_intervals, carpet_squares, diamond_dilate,
    dilate_mask, double_cube, transfer_mask,
)


def test_grid_geometry():
    g = build_grid(2, 5, center=(1.0, -1.0), side=2.0)
    assert g.h == pytest.approx(0.5)
    assert g.size == 25 and g.coords.shape == (25, 2)
    np.testing.assert_allclose(g.lo, [0.0, -2.0])
    np.testing.assert_allclose(g.coords[-1], [2.0, 0.0])


@pytest.mark.parametrize("n", [4, 3, 6])
def test_grid_rejects_bad_node_count(n):
    with pytest.raises(ValueError):
        build_grid(1, n)


def test_double_cube_embeds_parent():
    g = build_grid(2, 9)
    big = double_cube(g)
    assert big.n == 17 and big.side == pytest.approx(2.0) and big.h == pytest.approx(g.h)
    np.testing.assert_allclose(big.coords[big.parent_indices()], g.coords)


def test_point_and_segment_masks():
    g = build_grid(2, 9)
    assert build_mask(g, {"type": "point", "at": [0.5, 0.5]}).count == 1
    seg = build_mask(g, {"type": "segment", "a": [0.25, 0.5], "b": [0.75, 0.5]})
    assert seg.count == 5
    diag = build_mask(g, {"type": "segment", "a": [0.0, 0.0], "b": [1.0, 1.0]})
    assert diag.count == 9


def test_mask_outside_reference_cube_rejected():
    with pytest.raises(ValueError):
        build_mask(build_grid(1, 9), {"type": "point", "at": [1.5]})


def test_explicit_nodes_and_empty():
    g = build_grid(1, 9)
    assert build_mask(g, {"type": "nodes", "indices": []}).is_empty()
    with pytest.raises(ValueError):
        build_mask(g, [9])


def test_cantor_intervals_total_length():
    for depth in range(5):
        ivs = cantor_intervals(depth)
        assert len(ivs) == 2**depth
        assert sum(b - a for a, b in ivs) == pytest.approx((2 / 3) ** depth)


def test_cantor_mask_on_aligned_grid():
    g = build_grid(1, 28 * 2 - 1)  # spacing 1/54
    for depth, expected in [(0, 55), (1, 38), (2, 28)]:
        assert build_mask(g, {"type": "cantor", "depth": depth}).count == expected


def _carpet_bruteforce(n_cells, depth):
    """Nodes of the closed depth-``depth`` carpet on an ``n_cells`` grid of [0,1]^2."""
    k = 3**depth
    assert n_cells % k == 0
    per = n_cells // k
    kept = np.zeros((k, k), bool)
    for a in range(k):
        for b in range(k):
            ta, tb, ok = a, b, True
            for _ in range(depth):
                if ta % 3 == 1 and tb % 3 == 1:
                    ok = False
                ta, tb = ta // 3, tb // 3
            kept[a, b] = ok
    flags = np.zeros((n_cells + 1, n_cells + 1), bool)
    for a, b in zip(*np.nonzero(kept)):
        flags[a * per:(a + 1) * per + 1, b * per:(b + 1) * per + 1] = True
    return int(flags.sum())


@pytest.mark.parametrize("depth", [0, 1, 2, 3])
def test_carpet_matches_bruteforce(depth):
    g = build_grid(2, 55)
    assert build_mask(g, {"type": "carpet", "depth": depth}).count == _carpet_bruteforce(54, depth)


def test_carpet_squares_count_and_area():
    sq = carpet_squares(2, [0.0, 0.0], 1.0)
    assert len(sq) == 64
    assert sum(np.prod(hi - lo) for lo, hi in sq) == pytest.approx((8 / 9) ** 2)


def test_dilations():
    g = build_grid(2, 9)
    p = build_mask(g, {"type": "point", "at": [0.5, 0.5]})
    assert dilate_mask(p, 1).count == 9
    assert diamond_dilate(p, 1).count == 5
    assert diamond_dilate(p, 2).count == 13
    assert dilate_mask(p, 0).count == 1


def test_transfer_mask_between_grids():
    g = build_grid(1, 9)
    big = double_cube(g)
    K = build_mask(g, {"type": "cube"})
    Kb = transfer_mask(K, big)
    assert Kb.count == 9
    np.testing.assert_allclose(big.coords[Kb.indices], g.coords)


def test_grid_function_validation():
    g = build_grid(1, 5)
    with pytest.raises(ValueError):
        GridFunction(g, np.zeros(4))
    with pytest.raises(ValueError):
        GridFunction(g, [0, 1, np.nan, 0, 0])


@given(st.lists(st.integers(0, 80), max_size=20), st.lists(st.integers(0, 80), max_size=20))
def test_mask_set_algebra(a, b):
    g = build_grid(2, 9)
    A, B = build_mask(g, a), build_mask(g, b)
    assert A.issubset(A | B) and (A & B).issubset(A)
    assert (A | B).count == len(set(a) | set(b))


def test_masks_on_different_grids_do_not_mix():
    a = CompactMask(build_grid(1, 5), np.ones(5, bool))
    b = CompactMask(build_grid(1, 5, side=2.0), np.ones(5, bool))
    with pytest.raises(ValueError):
        a | b
