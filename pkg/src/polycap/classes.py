"""Discrete function classes defined by trace conditions on a compact set.

Trace conditions are imposed as node pins.  Vanishing of all
derivatives of order at most ``s`` at the nodes of ``K`` is modelled by
``u = 0`` on the l1 ball of radius ``s`` around every node of ``K``:
every compact difference of order ``<= s`` whose stencil touches ``K``
then vanishes.  The full-trace class pins ``u`` on ``K`` dilated by
``rho`` cells and then by the same l1 ball of radius ``m - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import CompactMask, GridCube, diamond_dilate, dilate_mask, transfer_mask
from .polynomials import Polynomial

__all__ = ["FunctionClassSpec", "partial_trace", "full_trace", "unconstrained"]

KINDS = ("partial", "full", "unconstrained")


@dataclass(frozen=True, eq=False)
class FunctionClassSpec:
    """Class of grid functions with trace conditions on ``mask``.

    Parameters
    ----------
    kind : {"partial", "full", "unconstrained"}
    m : int
        Ambient Sobolev order.
    mask : CompactMask or None
        The compact set ``K``.
    order : int
        Trace order ``s`` for the partial class, ``0 <= s <= m-1``.
    rho : int
        Dilation radius in cells for the full class, ``rho >= 1``.
    nonnegative : bool
        Restrict to ``u >= 0`` at every node.
    pin : Polynomial or None
        Optional projection pin ``Pi u = P``.
    """

    kind: str
    m: int = 1
    mask: CompactMask | None = None
    order: int = 0
    rho: int = 1
    nonnegative: bool = False
    pin: Polynomial | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"class kind must be one of {KINDS}")
        if self.m < 1:
            raise ValueError("order m must be at least 1")
        if self.kind == "partial" and not 0 <= self.order <= self.m - 1:
            raise ValueError("trace order must satisfy 0 <= s <= m-1")
        if self.kind == "full" and self.rho < 1:
            raise ValueError("dilation radius must be at least 1")
        if self.kind != "unconstrained" and self.mask is None:
            raise ValueError("trace classes need a compact set")

    def with_pin(self, pin: Polynomial | None) -> "FunctionClassSpec":
        return replace(self, pin=pin)

    def with_mask(self, mask: CompactMask) -> "FunctionClassSpec":
        return replace(self, mask=mask)

    def zero_set(self, grid: GridCube) -> np.ndarray:
        """Boolean node flags on ``grid`` where members must vanish.

        The set is built on the grid of ``mask`` and carried to ``grid``
        by node coordinates (equal spacing required).
        """
        if self.kind == "unconstrained" or self.mask is None:
            return np.zeros(grid.size, bool)
        K = self.mask
        if self.kind == "partial":
            Z = diamond_dilate(K, self.order)
        else:
            Z = diamond_dilate(dilate_mask(K, self.rho), self.m - 1)
        if not Z.grid.same_as(grid):
            Z = transfer_mask(Z, grid)
        return np.asarray(Z.flags).copy()

    def describe(self) -> dict:
        d = {"kind": self.kind, "m": self.m, "nonnegative": self.nonnegative}
        if self.kind == "partial":
            d["order"] = self.order
        if self.kind == "full":
            d["rho"] = self.rho
        if self.mask is not None:
            d["set"] = self.mask.provenance
            d["set_nodes"] = self.mask.count
        if self.pin is not None:
            d["pin"] = [float(c) for c in self.pin.coeffs]
        return d


def partial_trace(mask: CompactMask, m: int, order: int = 0, nonnegative: bool = False) -> FunctionClassSpec:
    return FunctionClassSpec("partial", m=m, mask=mask, order=order, nonnegative=nonnegative)


def full_trace(mask: CompactMask, m: int, rho: int = 1, nonnegative: bool = False) -> FunctionClassSpec:
    return FunctionClassSpec("full", m=m, mask=mask, rho=rho, nonnegative=nonnegative)


def unconstrained(m: int, nonnegative: bool = False) -> FunctionClassSpec:
    return FunctionClassSpec("unconstrained", m=m, nonnegative=nonnegative)
