"""Uniform node grids on axis-aligned cubes and compact node masks.

A :class:`GridCube` is the closed cube with centre ``center`` and side
``side`` sampled by ``n`` equispaced nodes per axis (``n`` odd, so the
centre is a node).  Nodes are enumerated row-major over ``meshgrid``
with ``indexing="ij"``, and every node carries the quadrature weight
``h**dim``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "GridCube",
    "CompactMask",
    "GridFunction",
    "build_grid",
    "double_cube",
    "build_mask",
    "dilate_mask",
    "diamond_dilate",
    "transfer_mask",
    "cantor_intervals",
    "carpet_squares",
]

_TIE = 1e-9


@dataclass(frozen=True, eq=False)
class GridCube:
    """Equispaced node grid on a closed cube.

    Attributes
    ----------
    dim : int
        Spatial dimension.
    n : int
        Nodes per axis (odd, at least 5).
    center : tuple of float
        Cube centre.
    side : float
        Side length.
    parent : GridCube or None
        Set on doublings; the parent's nodes form a sub-box of this grid.
    """

    dim: int
    n: int
    center: tuple
    side: float
    parent: "GridCube | None" = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return self.side / (self.n - 1)

    @property
    def weight(self) -> float:
        return self.h**self.dim

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - self.side / 2

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + self.side / 2

    @functools.cached_property
    def axes(self) -> tuple:
        lo, hi = self.lo, self.hi
        return tuple(np.linspace(lo[i], hi[i], self.n) for i in range(self.dim))

    @functools.cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dim)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    @property
    def offset(self) -> int:
        """Index offset of the parent cube inside a doubling."""
        if self.parent is None:
            return 0
        return (self.n - self.parent.n) // 2

    def same_as(self, other: "GridCube") -> bool:
        return (
            self.dim == other.dim
            and self.n == other.n
            and np.allclose(self.center, other.center, rtol=0, atol=1e-12)
            and abs(self.side - other.side) <= 1e-12 * max(1.0, self.side)
        )

    def parent_indices(self) -> np.ndarray:
        """Flat indices (into this grid) of the parent cube's nodes."""
        if self.parent is None:
            raise ValueError("grid has no parent cube")
        o, m = self.offset, self.parent.n
        sl = tuple(slice(o, o + m) for _ in range(self.dim))
        return np.arange(self.size).reshape(self.shape)[sl].ravel()

    def box_indices(self, lo: Sequence[int], hi: Sequence[int]) -> np.ndarray:
        """Flat indices of the inclusive node box ``lo..hi``."""
        sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))
        return np.arange(self.size).reshape(self.shape)[sl].ravel()

    def outer_layers(self, width: int) -> np.ndarray:
        """Boolean flags of nodes within ``width`` layers of the boundary."""
        idx = np.indices(self.shape)
        flags = np.zeros(self.shape, dtype=bool)
        for a in idx:
            flags |= (a < width) | (a > self.n - 1 - width)
        return flags.ravel()

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "n": self.n,
            "center": [float(c) for c in self.center],
            "side": float(self.side),
        }


def build_grid(dim: int, n: int, center: Sequence[float] | float | None = None,
               side: float = 1.0) -> GridCube:
    """Build the node grid of the cube with given centre and side.

    The default cube is the unit cube ``[0, 1]**dim``.

    Raises
    ------
    ValueError
        If ``n`` is even or smaller than 5, ``side`` is not positive, or
        ``dim`` is not 1, 2 or 3.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dim}")
    if n < 5 or n % 2 == 0:
        raise ValueError(f"nodes per axis must be odd and at least 5, got {n}")
    if not side > 0:
        raise ValueError(f"side must be positive, got {side}")
    if center is None:
        center = (0.5,) * dim
    elif np.isscalar(center):
        center = (float(center),) * dim
    center = tuple(float(c) for c in center)
    if len(center) != dim:
        raise ValueError("centre has the wrong dimension")
    return GridCube(dim, int(n), center, float(side))


def double_cube(grid: GridCube) -> GridCube:
    """Concentric cube of twice the side at the same spacing."""
    return GridCube(grid.dim, 2 * (grid.n - 1) + 1, grid.center, 2 * grid.side, parent=grid)


@dataclass(frozen=True, eq=False)
class CompactMask:
    """Immutable boolean node set on a grid."""

    grid: GridCube
    flags: np.ndarray
    provenance: str = "nodes"

    def __post_init__(self):
        f = np.asarray(self.flags, dtype=bool).ravel().copy()
        if f.size != self.grid.size:
            raise ValueError("mask length does not match the grid")
        f.setflags(write=False)
        object.__setattr__(self, "flags", f)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def is_empty(self) -> bool:
        return not self.flags.any()

    def __or__(self, other: "CompactMask") -> "CompactMask":
        _same_grid(self, other)
        return CompactMask(self.grid, self.flags | other.flags, f"({self.provenance})|({other.provenance})")

    def __and__(self, other: "CompactMask") -> "CompactMask":
        _same_grid(self, other)
        return CompactMask(self.grid, self.flags & other.flags, f"({self.provenance})&({other.provenance})")

    def issubset(self, other: "CompactMask") -> bool:
        _same_grid(self, other)
        return bool(np.all(~self.flags | other.flags))


def _same_grid(a: CompactMask, b: CompactMask) -> None:
    if not a.grid.same_as(b.grid):
        raise ValueError("masks live on different grids")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a real function on a grid."""

    grid: GridCube
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite values")
        object.__setattr__(self, "values", v)

    def reshape(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


# ---------------------------------------------------------------- geometry


def cantor_intervals(depth: int, lo: float = 0.0, hi: float = 1.0) -> list:
    """Intervals of the middle-thirds Cantor construction at ``depth``."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    ivs = [(lo, hi)]
    for _ in range(depth):
        nxt = []
        for a, b in ivs:
            t = (b - a) / 3
            nxt += [(a, a + t), (b - t, b)]
        ivs = nxt
    return ivs


def carpet_squares(depth: int, lo: Sequence[float], side: float) -> list:
    """Squares ``(lo, hi)`` of the Sierpinski carpet construction."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    sq = [(np.asarray(lo, float), float(side))]
    for _ in range(depth):
        nxt = []
        for c, s in sq:
            t = s / 3
            for i in range(3):
                for j in range(3):
                    if i == 1 and j == 1:
                        continue
                    nxt.append((c + t * np.array([i, j]), t))
        sq = nxt
    return [(c, c + s) for c, s in sq]


def _reference_cube(grid: GridCube) -> GridCube:
    return grid.parent if grid.parent is not None else grid


def _boxes(geom: Mapping[str, Any], grid: GridCube) -> list:
    """Decompose a geometry descriptor into closed boxes ``(lo, hi)``."""
    ref = _reference_cube(grid)
    d = grid.dim
    kind = geom.get("type")
    if kind == "point":
        x = np.asarray(geom["at"], float).reshape(d)
        return [(x, x)]
    if kind == "box":
        return [(np.asarray(geom["lo"], float).reshape(d), np.asarray(geom["hi"], float).reshape(d))]
    if kind == "cube":
        return [(ref.lo, ref.hi)]
    if kind == "cantor":
        depth = int(geom["depth"])
        lo, hi = ref.lo, ref.hi
        ivs = [cantor_intervals(depth, lo[i], hi[i]) for i in range(d)]
        axes = geom.get("axes", "all")
        if d == 1 or axes == "all":
            out = []
            for combo in np.array(np.meshgrid(*[np.arange(len(v)) for v in ivs], indexing="ij")).reshape(d, -1).T:
                out.append((np.array([ivs[i][c][0] for i, c in enumerate(combo)]),
                            np.array([ivs[i][c][1] for i, c in enumerate(combo)])))
            return out
        # Cantor set along axis 0 placed on the line through the centre.
        ax = int(axes)
        out = []
        for a, b in ivs[ax]:
            blo, bhi = np.array(ref.center, float), np.array(ref.center, float)
            blo[ax], bhi[ax] = a, b
            out.append((blo, bhi))
        return out
    if kind == "carpet":
        if d != 2:
            raise ValueError("carpet geometry needs dimension 2")
        return carpet_squares(int(geom["depth"]), ref.lo, ref.side)
    if kind == "union":
        out = []
        for part in geom["parts"]:
            out += _boxes(part, grid)
        return out
    raise ValueError(f"unknown geometry type {kind!r}")


def _segment_flags(grid: GridCube, a, b, tol) -> np.ndarray:
    a, b = np.asarray(a, float), np.asarray(b, float)
    ab = b - a
    pts = grid.coords
    L2 = float(ab @ ab)
    t = np.zeros(len(pts)) if L2 == 0 else np.clip((pts - a) @ ab / L2, 0, 1)
    dist = np.linalg.norm(pts - a - t[:, None] * ab, axis=1)
    return dist <= tol


def _box_flags(grid: GridCube, lo, hi, tol) -> np.ndarray:
    pts = grid.coords
    gap = np.maximum(np.maximum(lo - pts, pts - hi), 0.0)
    return np.linalg.norm(gap, axis=1) <= tol


def build_mask(grid: GridCube, geometry: Mapping[str, Any] | Sequence[int] | np.ndarray) -> CompactMask:
    """Rasterise a compact set onto the nodes of ``grid``.

    ``geometry`` is a descriptor dict (``point``, ``segment``, ``box``,
    ``cube``, ``cantor``, ``carpet``, ``union`` or ``nodes``) or an
    explicit sequence of flat node indices.  A node belongs to the mask
    when its distance to the set is at most ``h/2``.  On a doubling, the
    set must lie in the parent cube and the mask is confined to it.
    """
    ref = _reference_cube(grid)
    tol = grid.h / 2 * (1 + _TIE)
    if not isinstance(geometry, Mapping):
        idx = np.asarray(geometry, dtype=int).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= grid.size):
            raise ValueError("node index out of range")
        flags = np.zeros(grid.size, bool)
        flags[idx] = True
        return CompactMask(grid, flags, "nodes")
    kind = geometry.get("type")
    if kind == "nodes":
        m = build_mask(grid, geometry["indices"])
        return CompactMask(grid, m.flags, "nodes")
    if kind == "segment":
        pieces = [(np.asarray(geometry["a"], float), np.asarray(geometry["b"], float))]
        bounds = [np.minimum(*pieces[0]), np.maximum(*pieces[0])]
        _check_inside(ref, bounds[0], bounds[1])
        flags = _segment_flags(grid, pieces[0][0], pieces[0][1], tol)
    else:
        boxes = _boxes(geometry, grid)
        flags = np.zeros(grid.size, bool)
        for lo, hi in boxes:
            if np.any(lo > hi):
                raise ValueError("box with lo > hi")
            _check_inside(ref, lo, hi)
            flags |= _box_flags(grid, lo, hi, tol)
    if grid.parent is not None:
        inside = np.zeros(grid.size, bool)
        inside[grid.parent_indices()] = True
        flags &= inside
    return CompactMask(grid, flags, _describe(geometry))


def _check_inside(ref: GridCube, lo, hi) -> None:
    eps = 1e-12 * max(1.0, ref.side)
    if np.any(np.asarray(lo) < ref.lo - eps) or np.any(np.asarray(hi) > ref.hi + eps):
        raise ValueError("geometry extends outside the reference cube")


def _describe(geometry: Mapping[str, Any]) -> str:
    kind = geometry.get("type")
    if kind in ("cantor", "carpet"):
        return f"{kind}(depth={geometry['depth']})"
    if kind == "union":
        return "union(" + ",".join(_describe(p) for p in geometry["parts"]) + ")"
    return str(kind)


def _as_array(mask: CompactMask) -> np.ndarray:
    return np.asarray(mask.flags).reshape(mask.grid.shape)


def dilate_mask(mask: CompactMask, radius: int) -> CompactMask:
    """Chebyshev dilation by ``radius`` nodes, clipped to the grid."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0 or mask.is_empty():
        return mask
    st = ndimage.generate_binary_structure(mask.grid.dim, mask.grid.dim)
    out = ndimage.binary_dilation(_as_array(mask), structure=st, iterations=radius)
    return CompactMask(mask.grid, out.ravel(), f"dilate({mask.provenance},{radius})")


def diamond_dilate(mask: CompactMask, radius: int) -> CompactMask:
    """Dilation by the l1 ball of ``radius`` nodes, clipped to the grid."""
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0 or mask.is_empty():
        return mask
    st = ndimage.generate_binary_structure(mask.grid.dim, 1)
    out = ndimage.binary_dilation(_as_array(mask), structure=st, iterations=radius)
    return CompactMask(mask.grid, out.ravel(), f"diamond({mask.provenance},{radius})")


def transfer_mask(mask: CompactMask, target: GridCube) -> CompactMask:
    """Carry a mask to another grid of equal spacing by node coordinates.

    Nodes falling outside ``target`` are dropped.
    """
    src = mask.grid
    if abs(src.h - target.h) > 1e-12 * src.h or src.dim != target.dim:
        raise ValueError("grids have different spacing or dimension")
    pts = src.coords[mask.indices]
    rel = (pts - target.lo) / target.h
    ij = np.rint(rel).astype(int)
    if np.any(np.abs(rel - ij) > 1e-6):
        raise ValueError("grids are not node aligned")
    ok = np.all((ij >= 0) & (ij < target.n), axis=1)
    flags = np.zeros(target.size, bool)
    if ok.any():
        flags[np.ravel_multi_index(tuple(ij[ok].T), target.shape)] = True
    return CompactMask(target, flags, mask.provenance)

