"""Overlapping strip decomposition of the grid with normalized masks.

The domain is cut into m vertical strips along direction 1.  Each strip gets
a nodal weight eta_a >= 0 supported on the strip; the squares of the weights
form a partition of unity, sum_a eta_a(x)^2 = 1 at every node.  Masking a
velocity by eta_a restricts it to the strip; summing the masked restrictions
recovers the original field because the squares sum to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DecomposedVelocity, GridMismatchError, GridSpec, VelocityField
from .operators import MaskOperator, apply_mask


class InvalidPartitionError(ValueError):
    """Strip counts or overlaps that do not fit the grid."""


@dataclass
class Partition:
    """Strip decomposition: masks plus the node extent of each strip."""

    grid: GridSpec
    masks: list[MaskOperator]
    extents: list[tuple[int, int]]
    overlap: int

    @property
    def m(self) -> int:
        return len(self.masks)


def build_strips(grid: GridSpec, m: int, overlap: int) -> Partition:
    """Cut the grid into m vertical strips with the given node overlap.

    Parameters
    ----------
    m : int
        Number of strips, at least 1.
    overlap : int
        Number of nodes shared by adjacent strips, at least 0.  The shared
        nodes sit symmetrically about each strip interface; for odd overlaps
        the extra node goes to the lower-index strip.

    The raw strip weights are piecewise linear ramps that sum to one, equal
    to one on each strip core; the stored masks are their square roots so
    the squares sum to one.  Requires floor(n1 / m) > overlap so that only
    adjacent strips overlap; raises InvalidPartitionError otherwise.
    """
    if int(m) != m or m < 1:
        raise InvalidPartitionError(f"strip count must be a positive integer, got {m}")
    if int(overlap) != overlap or overlap < 0:
        raise InvalidPartitionError(f"overlap must be a non-negative integer, got {overlap}")
    m, overlap = int(m), int(overlap)
    if grid.n1 // m <= overlap:
        raise InvalidPartitionError(
            f"strips of width {grid.n1 // m} cannot carry an overlap of {overlap} nodes"
        )

    # interface positions: wider strips first when n1 is not divisible by m
    base, extra = divmod(grid.n1, m)
    cuts = [0]
    for a in range(m):
        cuts.append(cuts[-1] + base + (1 if a < extra else 0))

    # ramp interval [lo_k, hi_k] around interface k, hi - lo = overlap + 1
    width = overlap + 1
    ramp_lo = [cuts[k] - (width + 1) // 2 for k in range(1, m)]
    ramp_hi = [lo + width for lo in ramp_lo]

    nodes = np.arange(grid.n1 + 1, dtype=float)
    masks: list[MaskOperator] = []
    extents: list[tuple[int, int]] = []
    for a in range(m):
        w = np.ones(grid.n1 + 1)
        if a > 0:
            w = np.minimum(w, (nodes - ramp_lo[a - 1]) / width)
        if a < m - 1:
            w = np.minimum(w, (ramp_hi[a] - nodes) / width)
        w = np.clip(w, 0.0, 1.0)
        eta = np.sqrt(w)[:, None] * np.ones((1, grid.n2 + 1))
        masks.append(MaskOperator(grid, eta))
        lo = ramp_lo[a - 1] + 1 if a > 0 else 0
        hi = ramp_hi[a] - 1 if a < m - 1 else grid.n1
        extents.append((lo, hi))
    return Partition(grid=grid, masks=masks, extents=extents, overlap=overlap)


def decompose(part: Partition, u: VelocityField) -> DecomposedVelocity:
    """Restrict a velocity to every strip: component a is eta_a times u."""
    if part.grid != u.grid:
        raise GridMismatchError("partition and field grids differ")
    return DecomposedVelocity([apply_mask(chi, u) for chi in part.masks])


def recompose(part: Partition, U: DecomposedVelocity) -> VelocityField:
    """Blend strip components back into one field: sum of eta_a times u_a.

    Inverse of decompose because the squared masks sum to one.
    """
    if part.grid != U.grid:
        raise GridMismatchError("partition and field grids differ")
    if part.m != U.m:
        raise GridMismatchError(f"{part.m} strips but {U.m} components")
    out1 = np.zeros(part.grid.shape)
    out2 = np.zeros(part.grid.shape)
    for chi, comp in zip(part.masks, U.components):
        out1 += chi.eta * comp.u1
        out2 += chi.eta * comp.u2
    return VelocityField(part.grid, out1, out2)
