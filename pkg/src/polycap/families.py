"""Seeded families of compact sets used by the acceptance suites."""

from __future__ import annotations

import numpy as np

from .grid import GridCube, build_grid, build_mask

__all__ = [
    "equivalence_cube",
    "equivalence_family",
    "equivalence_geometries",
    "nested_pairs",
    "synthesis_geometries",
]


def equivalence_cube(n: int = 33, side: float = 16.0) -> GridCube:
    """2D cube of side 16 and spacing 1/2 centred at the origin.

    A large side keeps the capped capacity below its cap of 1 for the
    sets of the family.
    """
    return build_grid(2, n, center=(0.0, 0.0), side=side)


def equivalence_geometries() -> list:
    """Ten fixed 2D geometries in the coordinates of :func:`equivalence_cube`."""
    return [
        {"type": "point", "at": [0.0, 0.0]},
        {"type": "point", "at": [1.0, -1.5]},
        {"type": "union", "parts": [{"type": "point", "at": [-1.0, 0.0]}, {"type": "point", "at": [1.0, 0.0]}]},
        {"type": "segment", "a": [-1.0, 0.0], "b": [1.0, 0.0]},
        {"type": "segment", "a": [-2.0, 0.5], "b": [2.0, 0.5]},
        {"type": "segment", "a": [-1.0, -1.0], "b": [1.0, 1.0]},
        {"type": "box", "lo": [-0.5, -0.5], "hi": [0.5, 0.5]},
        {"type": "box", "lo": [-1.5, -0.5], "hi": [1.5, 0.5]},
        {"type": "union", "parts": [{"type": "box", "lo": [-1.5, 0.0], "hi": [1.5, 0.0]},
                                    {"type": "box", "lo": [0.0, -1.5], "hi": [0.0, 1.5]}]},
        {"type": "union", "parts": [{"type": "point", "at": [x, y]} for x in (-1.5, 1.5) for y in (-1.5, 1.5)]},
    ]


def equivalence_family(Q: GridCube | None = None) -> list:
    Q = equivalence_cube() if Q is None else Q
    return [build_mask(Q, g) for g in equivalence_geometries()]


def nested_pairs(grid: GridCube, count: int, seed: int = 0, margin: int = 1) -> list:
    """Seeded pairs ``K1 subset K2`` of random node sets.

    Nodes are drawn from the interior box that keeps ``margin`` layers
    free on every side.  ``K2`` adds at least one node to ``K1``.
    """
    rng = np.random.default_rng(seed)
    inner = np.ones(grid.shape, bool)
    for ax in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[ax] = slice(0, margin)
        inner[tuple(sl)] = False
        sl[ax] = slice(grid.n - margin, None)
        inner[tuple(sl)] = False
    pool = np.flatnonzero(inner.ravel())
    pairs = []
    for _ in range(count):
        size = int(rng.integers(1, 4))
        extra = int(rng.integers(1, 4))
        pick = rng.choice(pool, size + extra, replace=False)
        k1 = build_mask(grid, np.sort(pick[:size]))
        k2 = build_mask(grid, np.sort(pick))
        pairs.append((k1, k2))
    return pairs


def synthesis_geometries(dim: int) -> dict:
    """Point, segment and depth-1 Cantor set in the unit cube ``[0, 1]^dim``.

    The segment has dyadic endpoints so that its position relative to the
    cube lattice is the same at every cube side of the schedule.
    """
    c = [0.5] * dim
    return {
        "point": {"type": "point", "at": c},
        "segment": {"type": "box", "lo": [0.25] + c[1:], "hi": [0.75] + c[1:]},
        "cantor": {"type": "cantor", "depth": 1},
    }

