"""Matrix-free finite difference operators and their dense counterparts.

Conventions, fixed once here and relied on everywhere else:

* The viscous operator is nu times the negative five-point Laplacian with
  homogeneous Dirichlet values; it acts on interior nodes and is selfadjoint
  positive definite in the velocity inner product.
* The pressure gradient uses forward differences and lives on interior nodes.
* The divergence uses backward differences and lives on the pressure nodes.
  Signs are chosen so that for any pressure p and any velocity u vanishing on
  the boundary

      (grad p, u) + (p, div u) = 0

  holds exactly (summation by parts): the divergence is the negated adjoint
  of the gradient.
* Masks multiply both velocity components by a fixed nodal weight; they are
  diagonal, hence selfadjoint.

Dense assembly enumerates unknowns canonically: row-major over (i1, i2),
velocity components concatenated u1-block then u2-block, subdomain blocks in
subdomain order.  The dense path shares no code with the stencil path, so the
two serve as independent cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import (
    DecomposedVelocity,
    GridMismatchError,
    GridSpec,
    PressureField,
    VelocityField,
)


class SizeGuardError(ValueError):
    """Dense assembly requested on a grid too large to assemble explicitly."""


_DENSE_NODE_LIMIT = 10_000


@dataclass(frozen=True)
class ViscousOperator:
    """nu times the negative discrete Laplacian on interior nodes."""

    grid: GridSpec
    nu: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"viscosity must be positive, got {self.nu}")


@dataclass
class MaskOperator:
    """Diagonal operator scaling both velocity components by a nodal weight."""

    grid: GridSpec
    eta: np.ndarray

    def __post_init__(self) -> None:
        self.eta = np.array(self.eta, dtype=float)
        if self.eta.shape != self.grid.shape:
            raise GridMismatchError(f"mask shape {self.eta.shape} does not match grid {self.grid.shape}")


# -- raw kernels on stacked (2, n1+1, n2+1) arrays; shared by the field-level
#    operations and the solver hot loops

def _viscous_raw(x: np.ndarray, grid: GridSpec, nu: float) -> np.ndarray:
    out = np.zeros_like(x)
    c1 = nu / grid.h1**2
    c2 = nu / grid.h2**2
    inner = x[:, 1:-1, 1:-1]
    out[:, 1:-1, 1:-1] = c1 * (2.0 * inner - x[:, 2:, 1:-1] - x[:, :-2, 1:-1]) + c2 * (
        2.0 * inner - x[:, 1:-1, 2:] - x[:, 1:-1, :-2]
    )
    return out


def _gradient_raw(p: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros((2,) + grid.shape)
    out[0, 1:-1, 1:-1] = (p[2:, 1:-1] - p[1:-1, 1:-1]) / grid.h1
    out[1, 1:-1, 1:-1] = (p[1:-1, 2:] - p[1:-1, 1:-1]) / grid.h2
    return out


def _divergence_raw(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.shape)
    out[1:, 1:] = (x[0, 1:, 1:] - x[0, :-1, 1:]) / grid.h1 + (x[1, 1:, 1:] - x[1, 1:, :-1]) / grid.h2
    return out


def _stack(u: VelocityField) -> np.ndarray:
    return np.stack([u.u1, u.u2])


def _unstack(grid: GridSpec, x: np.ndarray) -> VelocityField:
    return VelocityField(grid, x[0], x[1])


def apply_viscous(op: ViscousOperator, u: VelocityField) -> VelocityField:
    """Apply the viscous operator componentwise; result is zero on the boundary."""
    if op.grid != u.grid:
        raise GridMismatchError("operator and field grids differ")
    return _unstack(u.grid, _viscous_raw(_stack(u), u.grid, op.nu))


def spectral_lower_bound(grid: GridSpec) -> float:
    """Smallest eigenvalue of the negative discrete Laplacian on this grid.

    Closed form: sum over directions of (4 / h_a^2) sin^2(pi h_a / (2 l_a)).
    The viscous operator then satisfies (A u, u) >= nu * bound * (u, u).
    """
    t1 = (4.0 / grid.h1**2) * math.sin(math.pi * grid.h1 / (2.0 * grid.l1)) ** 2
    t2 = (4.0 / grid.h2**2) * math.sin(math.pi * grid.h2 / (2.0 * grid.l2)) ** 2
    return t1 + t2


def apply_gradient(p: PressureField) -> VelocityField:
    """Forward-difference pressure gradient, defined on interior nodes."""
    return _unstack(p.grid, _gradient_raw(p.p, p.grid))


def apply_divergence(u: VelocityField) -> PressureField:
    """Backward-difference divergence on the pressure nodes.

    Satisfies (grad p, u) + (p, div u) = 0 for every p and every u that
    vanishes on the boundary.
    """
    return PressureField(u.grid, _divergence_raw(_stack(u), u.grid))


def apply_mask(chi: MaskOperator, u: VelocityField) -> VelocityField:
    if chi.grid != u.grid:
        raise GridMismatchError("mask and field grids differ")
    return VelocityField(u.grid, chi.eta * u.u1, chi.eta * u.u2)


def apply_block(chi_a: MaskOperator, op: ViscousOperator, chi_b: MaskOperator, u: VelocityField) -> VelocityField:
    """One coupling block: mask by chi_b, apply the viscous operator, mask by chi_a."""
    return apply_mask(chi_a, apply_viscous(op, apply_mask(chi_b, u)))


def apply_coupling(masks: Sequence[MaskOperator], op: ViscousOperator, U: DecomposedVelocity) -> DecomposedVelocity:
    """Full block operator on the product space: row a is chi_a A (sum_b chi_b u_b)."""
    if len(masks) != U.m:
        raise GridMismatchError(f"{len(masks)} masks for {U.m} components")
    grid = U.grid
    w = np.zeros((2,) + grid.shape)
    for chi, comp in zip(masks, U.components):
        w += chi.eta * _stack(comp)
    aw = _viscous_raw(w, grid, op.nu)
    return DecomposedVelocity([_unstack(grid, chi.eta * aw) for chi in masks])


def apply_coupling_lower(masks: Sequence[MaskOperator], op: ViscousOperator, U: DecomposedVelocity) -> DecomposedVelocity:
    """Lower triangle of the block operator: strict sub-blocks plus half the diagonal."""
    if len(masks) != U.m:
        raise GridMismatchError(f"{len(masks)} masks for {U.m} components")
    grid = U.grid
    rows = []
    prefix = np.zeros((2,) + grid.shape)
    for chi, comp in zip(masks, U.components):
        own = chi.eta * _stack(comp)
        aw = _viscous_raw(prefix + 0.5 * own, grid, op.nu)
        rows.append(_unstack(grid, chi.eta * aw))
        prefix += own
    return DecomposedVelocity(rows)


def apply_coupling_upper(masks: Sequence[MaskOperator], op: ViscousOperator, U: DecomposedVelocity) -> DecomposedVelocity:
    """Upper triangle of the block operator; the adjoint of the lower triangle."""
    if len(masks) != U.m:
        raise GridMismatchError(f"{len(masks)} masks for {U.m} components")
    grid = U.grid
    rows = []
    suffix = np.zeros((2,) + grid.shape)
    for chi, comp in zip(reversed(masks), reversed(U.components)):
        own = chi.eta * _stack(comp)
        aw = _viscous_raw(suffix + 0.5 * own, grid, op.nu)
        rows.append(_unstack(grid, chi.eta * aw))
        suffix += own
    rows.reverse()
    return DecomposedVelocity(rows)


# -- canonical flattening, used by the dense path and nothing else

def velocity_to_vector(u: VelocityField) -> np.ndarray:
    """Interior values, row-major over (i1, i2), u1 block then u2 block."""
    return np.concatenate([u.u1[1:-1, 1:-1].ravel(), u.u2[1:-1, 1:-1].ravel()])


def vector_to_velocity(grid: GridSpec, vec: np.ndarray) -> VelocityField:
    m = grid.num_interior
    if vec.shape != (2 * m,):
        raise GridMismatchError(f"expected vector of length {2 * m}, got {vec.shape}")
    shape = (grid.n1 - 1, grid.n2 - 1)
    u = VelocityField.zeros(grid)
    u.u1[1:-1, 1:-1] = vec[:m].reshape(shape)
    u.u2[1:-1, 1:-1] = vec[m:].reshape(shape)
    return u


def pressure_to_vector(p: PressureField) -> np.ndarray:
    """Pressure-node values, row-major over (i1, i2)."""
    return p.p[1:, 1:].ravel().copy()


def vector_to_pressure(grid: GridSpec, vec: np.ndarray) -> PressureField:
    if vec.shape != (grid.num_pressure,):
        raise GridMismatchError(f"expected vector of length {grid.num_pressure}, got {vec.shape}")
    p = PressureField.zeros(grid)
    p.p[1:, 1:] = vec.reshape((grid.n1, grid.n2))
    return p


def decomposed_to_vector(U: DecomposedVelocity) -> np.ndarray:
    return np.concatenate([velocity_to_vector(c) for c in U.components])


def vector_to_decomposed(grid: GridSpec, m: int, vec: np.ndarray) -> DecomposedVelocity:
    size = 2 * grid.num_interior
    if vec.shape != (m * size,):
        raise GridMismatchError(f"expected vector of length {m * size}, got {vec.shape}")
    return DecomposedVelocity([vector_to_velocity(grid, vec[a * size : (a + 1) * size]) for a in range(m)])


# -- dense assembly

def _guard(grid: GridSpec) -> None:
    nodes = (grid.n1 + 1) * (grid.n2 + 1)
    if nodes > _DENSE_NODE_LIMIT:
        raise SizeGuardError(f"{nodes} nodes exceeds the dense assembly limit of {_DENSE_NODE_LIMIT}")


def _interior_index(grid: GridSpec, i1: int, i2: int) -> int:
    return (i1 - 1) * (grid.n2 - 1) + (i2 - 1)


def _pressure_index(grid: GridSpec, i1: int, i2: int) -> int:
    return (i1 - 1) * grid.n2 + (i2 - 1)


def _dense_laplacian(grid: GridSpec, nu: float) -> np.ndarray:
    m = grid.num_interior
    c1 = nu / grid.h1**2
    c2 = nu / grid.h2**2
    out = np.zeros((m, m))
    for i1 in range(1, grid.n1):
        for i2 in range(1, grid.n2):
            k = _interior_index(grid, i1, i2)
            out[k, k] = 2.0 * c1 + 2.0 * c2
            if i1 > 1:
                out[k, _interior_index(grid, i1 - 1, i2)] = -c1
            if i1 < grid.n1 - 1:
                out[k, _interior_index(grid, i1 + 1, i2)] = -c1
            if i2 > 1:
                out[k, _interior_index(grid, i1, i2 - 1)] = -c2
            if i2 < grid.n2 - 1:
                out[k, _interior_index(grid, i1, i2 + 1)] = -c2
    return out


def _dense_viscous(grid: GridSpec, nu: float) -> np.ndarray:
    lap = _dense_laplacian(grid, nu)
    m = grid.num_interior
    out = np.zeros((2 * m, 2 * m))
    out[:m, :m] = lap
    out[m:, m:] = lap
    return out


def _dense_gradient(grid: GridSpec) -> np.ndarray:
    m = grid.num_interior
    out = np.zeros((2 * m, grid.num_pressure))
    for i1 in range(1, grid.n1):
        for i2 in range(1, grid.n2):
            k = _interior_index(grid, i1, i2)
            out[k, _pressure_index(grid, i1 + 1, i2)] += 1.0 / grid.h1
            out[k, _pressure_index(grid, i1, i2)] += -1.0 / grid.h1
            out[m + k, _pressure_index(grid, i1, i2 + 1)] += 1.0 / grid.h2
            out[m + k, _pressure_index(grid, i1, i2)] += -1.0 / grid.h2
    return out


def _dense_divergence(grid: GridSpec) -> np.ndarray:
    m = grid.num_interior
    out = np.zeros((grid.num_pressure, 2 * m))

    def interior(i1: int, i2: int) -> bool:
        return 1 <= i1 <= grid.n1 - 1 and 1 <= i2 <= grid.n2 - 1

    for i1 in range(1, grid.n1 + 1):
        for i2 in range(1, grid.n2 + 1):
            k = _pressure_index(grid, i1, i2)
            if interior(i1, i2):
                out[k, _interior_index(grid, i1, i2)] += 1.0 / grid.h1
                out[k, m + _interior_index(grid, i1, i2)] += 1.0 / grid.h2
            if interior(i1 - 1, i2):
                out[k, _interior_index(grid, i1 - 1, i2)] += -1.0 / grid.h1
            if interior(i1, i2 - 1):
                out[k, m + _interior_index(grid, i1, i2 - 1)] += -1.0 / grid.h2
    return out


def _dense_mask(grid: GridSpec, eta: np.ndarray) -> np.ndarray:
    diag = eta[1:-1, 1:-1].ravel()
    return np.diag(np.concatenate([diag, diag]))


def assemble_dense(which: str, grid: GridSpec, **params) -> np.ndarray:
    """Assemble an operator as an explicit matrix in the canonical enumeration.

    Parameters
    ----------
    which : str
        One of 'viscous', 'gradient', 'divergence', 'mask', 'block',
        'implicit', 'coupling', 'coupling_lower', 'coupling_upper'.
    grid : GridSpec
        Grid to assemble on; refused via SizeGuardError when it has more
        than 10_000 nodes.
    params :
        'viscous' needs nu.  'mask' needs eta.  'block' needs nu, eta_row,
        eta_col.  'implicit' needs nu, tau, eta and assembles
        I + (tau/2) X A X.  The coupling variants need nu and masks (a
        sequence of MaskOperator) and assemble the block operator on the
        product space, its lower triangle (strict blocks plus half the
        diagonal), or its upper triangle.

    Returns
    -------
    numpy.ndarray
        The dense matrix.  Velocity vectors follow velocity_to_vector,
        pressure vectors follow pressure_to_vector.
    """
    _guard(grid)
    if which == "viscous":
        return _dense_viscous(grid, params["nu"])
    if which == "gradient":
        return _dense_gradient(grid)
    if which == "divergence":
        return _dense_divergence(grid)
    if which == "mask":
        return _dense_mask(grid, np.asarray(params["eta"], dtype=float))
    if which == "block":
        a = _dense_viscous(grid, params["nu"])
        xr = _dense_mask(grid, np.asarray(params["eta_row"], dtype=float))
        xc = _dense_mask(grid, np.asarray(params["eta_col"], dtype=float))
        return xr @ a @ xc
    if which == "implicit":
        a = _dense_viscous(grid, params["nu"])
        x = _dense_mask(grid, np.asarray(params["eta"], dtype=float))
        n = a.shape[0]
        return np.eye(n) + 0.5 * params["tau"] * (x @ a @ x)
    if which in ("coupling", "coupling_lower", "coupling_upper"):
        masks = params["masks"]
        a = _dense_viscous(grid, params["nu"])
        xs = [_dense_mask(grid, np.asarray(chi.eta, dtype=float)) for chi in masks]
        m = len(xs)
        size = a.shape[0]
        out = np.zeros((m * size, m * size))
        for ra in range(m):
            for cb in range(m):
                if which == "coupling":
                    scale = 1.0
                elif which == "coupling_lower":
                    scale = 0.5 if ra == cb else (1.0 if cb < ra else 0.0)
                else:
                    scale = 0.5 if ra == cb else (1.0 if cb > ra else 0.0)
                if scale:
                    out[ra * size : (ra + 1) * size, cb * size : (cb + 1) * size] = scale * (xs[ra] @ a @ xs[cb])
        return out
    raise ValueError(f"unknown operator kind {which!r}")
