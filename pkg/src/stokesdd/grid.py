"""Uniform rectangular grid and the discrete fields that live on it.

The domain is the rectangle (0, l1) x (0, l2), discretized by a uniform
non-staggered grid with nodes x = (i1*h1, i2*h2), i_a = 0..n_a.  Three node
sets matter:

* all nodes                  (i_a = 0..n_a),
* interior nodes             (i_a = 1..n_a-1), where velocities live,
* pressure nodes             (i_a = 1..n_a), interior plus the top and right
                             boundary lines.

Velocity components vanish on the boundary; pressure is defined on the
pressure set only.  Fields store the full node rectangle so stencil code can
use plain array slices; entries outside a field's node set are kept at zero.

Inner products integrate with the cell weight h1*h2 over the owning node set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidGridError(ValueError):
    """Grid dimensions or node counts that do not define a valid grid."""


class GridMismatchError(ValueError):
    """Fields or operators combined across different grids."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a uniform grid: side lengths, node counts, spacings."""

    l1: float
    l2: float
    n1: int
    n2: int
    h1: float
    h2: float

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape holding every node, (n1 + 1, n2 + 1)."""
        return (self.n1 + 1, self.n2 + 1)

    @property
    def num_interior(self) -> int:
        return (self.n1 - 1) * (self.n2 - 1)

    @property
    def num_pressure(self) -> int:
        return self.n1 * self.n2

    @property
    def cell_area(self) -> float:
        return self.h1 * self.h2

    def coords1(self) -> np.ndarray:
        return np.arange(self.n1 + 1) * self.h1

    def coords2(self) -> np.ndarray:
        return np.arange(self.n2 + 1) * self.h2


def make_grid(l1: float, l2: float, n1: int, n2: int) -> GridSpec:
    """Build a GridSpec for the rectangle (0, l1) x (0, l2).

    n1 and n2 are cell counts per direction; both must be at least 2 so the
    interior is nonempty.  Raises InvalidGridError otherwise.
    """
    if not (math.isfinite(l1) and math.isfinite(l2) and l1 > 0 and l2 > 0):
        raise InvalidGridError(f"side lengths must be positive and finite, got {l1}, {l2}")
    if int(n1) != n1 or int(n2) != n2 or n1 < 2 or n2 < 2:
        raise InvalidGridError(f"need at least 2 cells per direction, got {n1}, {n2}")
    n1, n2 = int(n1), int(n2)
    return GridSpec(l1=float(l1), l2=float(l2), n1=n1, n2=n2, h1=l1 / n1, h2=l2 / n2)


def _as_field_array(grid: GridSpec, data: np.ndarray | None) -> np.ndarray:
    if data is None:
        return np.zeros(grid.shape)
    arr = np.array(data, dtype=float)
    if arr.shape != grid.shape:
        raise GridMismatchError(f"array shape {arr.shape} does not match grid {grid.shape}")
    return arr


@dataclass
class VelocityField:
    """Two velocity components on the full node rectangle, zero on the boundary.

    Construction from arbitrary data copies it and zeroes the boundary entries,
    so every VelocityField satisfies the no-slip constraint by construction.
    """

    grid: GridSpec
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self) -> None:
        self.u1 = _as_field_array(self.grid, self.u1)
        self.u2 = _as_field_array(self.grid, self.u2)
        for comp in (self.u1, self.u2):
            comp[0, :] = 0.0
            comp[-1, :] = 0.0
            comp[:, 0] = 0.0
            comp[:, -1] = 0.0

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VelocityField":
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape))

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, self.u1, self.u2)


@dataclass
class PressureField:
    """Scalar field on the pressure nodes (i_a = 1..n_a).

    The stored array covers the full node rectangle; the lines i1 = 0 and
    i2 = 0 are outside the pressure set and are kept at zero.
    """

    grid: GridSpec
    p: np.ndarray

    def __post_init__(self) -> None:
        self.p = _as_field_array(self.grid, self.p)
        self.p[0, :] = 0.0
        self.p[:, 0] = 0.0

    @classmethod
    def zeros(cls, grid: GridSpec) -> "PressureField":
        return cls(grid, np.zeros(grid.shape))

    def copy(self) -> "PressureField":
        return PressureField(self.grid, self.p)


@dataclass
class DecomposedVelocity:
    """Tuple of per-subdomain velocity fields over a common grid."""

    components: list[VelocityField]

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("need at least one component")
        grid = self.components[0].grid
        for comp in self.components[1:]:
            if comp.grid != grid:
                raise GridMismatchError("components live on different grids")
        self.components = list(self.components)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    def copy(self) -> "DecomposedVelocity":
        return DecomposedVelocity([c.copy() for c in self.components])


def _require_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


def dot_velocity(a: VelocityField, b: VelocityField) -> float:
    """Inner product over interior nodes of both components, weight h1*h2.

    Boundary entries are structurally zero, so the sum may run over the full
    arrays without changing the value.
    """
    _require_same_grid(a, b)
    s = float(np.sum(a.u1 * b.u1)) + float(np.sum(a.u2 * b.u2))
    return a.grid.cell_area * s


def norm_velocity(a: VelocityField) -> float:
    return math.sqrt(dot_velocity(a, a))


def dot_pressure(p: PressureField, q: PressureField) -> float:
    """Inner product over the pressure nodes with the same h1*h2 weight."""
    _require_same_grid(p, q)
    return p.grid.cell_area * float(np.sum(p.p * q.p))


def norm_pressure(p: PressureField) -> float:
    return math.sqrt(dot_pressure(p, p))


def pressure_mean(p: PressureField) -> float:
    """Weighted mean over the pressure nodes; the weights sum to l1*l2."""
    return p.grid.cell_area * float(np.sum(p.p)) / (p.grid.l1 * p.grid.l2)


def deflate_pressure(p: PressureField) -> PressureField:
    """Remove the weighted mean so the result has mean zero."""
    out = p.copy()
    out.p[1:, 1:] -= pressure_mean(p)
    return out


def dot_decomposed(a: DecomposedVelocity, b: DecomposedVelocity) -> float:
    """Product-space inner product: sum of the componentwise velocity dots."""
    if a.m != b.m:
        raise GridMismatchError(f"component counts differ: {a.m} vs {b.m}")
    return sum(dot_velocity(ca, cb) for ca, cb in zip(a.components, b.components))


def norm_decomposed(a: DecomposedVelocity) -> float:
    return math.sqrt(dot_decomposed(a, a))
