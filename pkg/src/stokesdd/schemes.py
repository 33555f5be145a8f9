"""Time stepping for the unsteady Stokes system in velocity and pressure.

Two engines share the spatial operators:

* monolithic: one implicit viscous solve per step, then a projection onto
  discretely divergence-free velocities through a pressure Poisson solve;
* decomposed: the viscous operator is split across overlapping strips into
  a block operator, advanced by a forward then a backward masked triangular
  sweep (each solving small implicit strip systems), followed by one
  projection per strip.

Every step emits a StepReport with the norms entering the per-step energy
estimates, so stability monitors can replay a whole run from the reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .grid import (
    DecomposedVelocity,
    GridSpec,
    PressureField,
    VelocityField,
    deflate_pressure,
    norm_decomposed,
    norm_pressure,
    norm_velocity,
)
from .linsolve import SolveConfig, SolveReport, cg_solve
from .operators import (
    MaskOperator,
    ViscousOperator,
    _divergence_raw,
    _gradient_raw,
    _stack,
    _unstack,
    _viscous_raw,
    spectral_lower_bound,
)
from .partition import Partition, build_strips, decompose, recompose


class UnconvergedSolveError(RuntimeError):
    """An implicit solve hit its iteration cap before reaching tolerance."""


@dataclass
class SchemeConfig:
    """Everything one run needs: initial state, time grid, physics, solver.

    The step count is round(t_final / tau), at least one step, and tau is
    adjusted so that the steps cover t_final exactly.  The forcing callable
    receives the midpoint time of the step being taken and returns a
    VelocityField; None means no forcing.
    """

    v: VelocityField
    tau: float
    t_final: float
    nu: float = 1.0
    scheme: str = "monolithic"
    m: int = 1
    overlap: int = 0
    solver: SolveConfig = field(default_factory=SolveConfig)
    forcing: Callable[[float], VelocityField] | None = None

    def __post_init__(self) -> None:
        if self.scheme not in ("monolithic", "decomposed"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"time step must be positive, got {self.tau}")
        if not (math.isfinite(self.t_final) and self.t_final > 0):
            raise ValueError(f"final time must be positive, got {self.t_final}")
        self.tau_requested = self.tau
        self.n_steps = max(1, round(self.t_final / self.tau))
        self.tau = self.t_final / self.n_steps

    @property
    def grid(self) -> GridSpec:
        return self.v.grid

    @cached_property
    def viscous(self) -> ViscousOperator:
        return ViscousOperator(self.grid, self.nu)

    @cached_property
    def partition(self) -> Partition:
        return build_strips(self.grid, self.m, self.overlap)


@dataclass(frozen=True)
class StepReport:
    """Norms and diagnostics of one completed step.

    norm_state is taken before the step, norm_end after it; norm_quarter and
    norm_half are the stage norms (for the monolithic scheme there is a
    single intermediate stage and both carry its norm).  div_residual is the
    post-projection divergence norm, div_scale its pre-projection size, and
    bound_margin the slack left in the per-step energy estimate.
    """

    step: int
    t: float
    norm_state: float
    norm_quarter: float
    norm_half: float
    norm_end: float
    norm_forcing: float
    div_residual: float
    div_scale: float
    cg_iters_total: int
    bound_margin: float


@dataclass
class RunResult:
    config: SchemeConfig
    reports: list[StepReport]
    velocity: VelocityField
    state: DecomposedVelocity | None
    pressure: PressureField | None
    pressures: list[PressureField] | None
    completed: bool
    message: str = ""


def _tally(status: dict | None, report: SolveReport, what: str) -> None:
    if status is not None:
        status["cg_iters"] = status.get("cg_iters", 0) + report.iterations
    if not report.converged:
        raise UnconvergedSolveError(
            f"{what}: {report.iterations} iterations, residual {report.residual:.3e}"
        )


def _deflate_block(arr: np.ndarray) -> np.ndarray:
    # constant pressure mode lives on the pressure nodes only
    arr[1:, 1:] -= arr[1:, 1:].mean()
    return arr


def viscous_step_monolithic(
    u: VelocityField,
    f_half: VelocityField | None,
    tau: float,
    op: ViscousOperator,
    solver: SolveConfig | None = None,
    status: dict | None = None,
) -> VelocityField:
    """Implicit viscous step: solve (E + tau A) u_star = u + tau f."""
    grid = u.grid
    nu = op.nu

    def system(x: np.ndarray) -> np.ndarray:
        return x + tau * _viscous_raw(x, grid, nu)

    rhs = _stack(u)
    if f_half is not None:
        rhs = rhs + tau * _stack(f_half)
    x, rep = cg_solve(system, rhs, solver)
    _tally(status, rep, "viscous solve")
    return _unstack(grid, x)


def pressure_projection(
    u_star: VelocityField,
    tau: float,
    solver: SolveConfig | None = None,
    status: dict | None = None,
) -> tuple[VelocityField, PressureField]:
    """Project onto discretely divergence-free fields.

    Solves the pressure Poisson system built from the divergence of the
    gradient, then corrects u_star by tau times the pressure gradient.  The
    returned pressure has zero mean.
    """
    grid = u_star.grid
    solver = solver or SolveConfig()
    solver = SolveConfig(
        rel_tol=solver.rel_tol,
        abs_tol=solver.abs_tol,
        max_iter=solver.max_iter,
        deflate_constants=True,
    )

    def system(q: np.ndarray) -> np.ndarray:
        return -_divergence_raw(_gradient_raw(q, grid), grid)

    rhs = -(1.0 / tau) * _divergence_raw(_stack(u_star), grid)
    parr, rep = cg_solve(system, rhs, solver, project=_deflate_block)
    _tally(status, rep, "pressure solve")
    xnew = _stack(u_star) - tau * _gradient_raw(parr, grid)
    return _unstack(grid, xnew), deflate_pressure(PressureField(grid, parr))


def _strip_system(grid: GridSpec, nu: float, tau: float, eta: np.ndarray):
    half = 0.5 * tau

    def system(x: np.ndarray) -> np.ndarray:
        return x + half * eta * _viscous_raw(eta * x, grid, nu)

    return system


def dd_forward_sweep(
    U: DecomposedVelocity,
    F_half: DecomposedVelocity | None,
    tau: float,
    op: ViscousOperator,
    part: Partition,
    solver: SolveConfig | None = None,
    status: dict | None = None,
) -> DecomposedVelocity:
    """Strip-by-strip implicit solves in increasing strip order.

    Strip a sees the already updated strips b < a through the coupling
    blocks; its own implicit system is E + (tau/2) chi_a A chi_a.
    """
    grid = U.grid
    nu = op.nu
    out: list[VelocityField] = []
    prefix = np.zeros((2,) + grid.shape)
    for a, (chi, comp) in enumerate(zip(part.masks, U.components)):
        rhs = _stack(comp)
        if F_half is not None:
            rhs = rhs + tau * _stack(F_half.components[a])
        if a > 0:
            rhs = rhs - tau * chi.eta * _viscous_raw(prefix, grid, nu)
        x, rep = cg_solve(_strip_system(grid, nu, tau, chi.eta), rhs, solver)
        _tally(status, rep, f"forward sweep, strip {a}")
        out.append(_unstack(grid, x))
        prefix += chi.eta * x
    return DecomposedVelocity(out)


def dd_backward_sweep(
    U: DecomposedVelocity,
    tau: float,
    op: ViscousOperator,
    part: Partition,
    solver: SolveConfig | None = None,
    status: dict | None = None,
) -> DecomposedVelocity:
    """Strip-by-strip implicit solves in decreasing strip order, no forcing."""
    grid = U.grid
    nu = op.nu
    out: list[VelocityField] = []
    suffix = np.zeros((2,) + grid.shape)
    for a in range(part.m - 1, -1, -1):
        chi = part.masks[a]
        rhs = _stack(U.components[a])
        if a < part.m - 1:
            rhs = rhs - tau * chi.eta * _viscous_raw(suffix, grid, nu)
        x, rep = cg_solve(_strip_system(grid, nu, tau, chi.eta), rhs, solver)
        _tally(status, rep, f"backward sweep, strip {a}")
        out.append(_unstack(grid, x))
        suffix += chi.eta * x
    out.reverse()
    return DecomposedVelocity(out)


def dd_pressure_substeps(
    U: DecomposedVelocity,
    tau: float,
    part: Partition,
    solver: SolveConfig | None = None,
    status: dict | None = None,
) -> tuple[DecomposedVelocity, list[PressureField]]:
    """Per-strip projections: strip a is corrected by its own pressure.

    Substeps do not interact, so the loop order is immaterial; each solves
    the masked Poisson system and removes the masked gradient from its own
    component only.
    """
    grid = U.grid
    out: list[VelocityField] = []
    pressures: list[PressureField] = []
    for a, (chi, comp) in enumerate(zip(part.masks, U.components)):
        eta = chi.eta
        eta2 = eta * eta

        def system(q: np.ndarray, eta2: np.ndarray = eta2) -> np.ndarray:
            return -_divergence_raw(eta2 * _gradient_raw(q, grid), grid)

        x = _stack(comp)
        rhs = -(1.0 / tau) * _divergence_raw(eta * x, grid)
        parr, rep = cg_solve(system, rhs, solver)
        _tally(status, rep, f"pressure substep, strip {a}")
        out.append(_unstack(grid, x - tau * eta * _gradient_raw(parr, grid)))
        pressures.append(PressureField(grid, parr))
    return DecomposedVelocity(out), pressures


def blend_pressures(part: Partition, pressures: list[PressureField]) -> PressureField:
    """Mask-weighted blend of the strip pressures.

    Diagnostic only: the scheme never uses a single global pressure, this
    just gives one field to look at.
    """
    out = np.zeros(part.grid.shape)
    for chi, p in zip(part.masks, pressures):
        out += chi.eta * p.p
    return PressureField(part.grid, out)


def _finite_or_raise(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            from .linsolve import NumericalBreakdownError

            raise NumericalBreakdownError(f"non-finite norm {v} in step report")


def step_monolithic(
    u: VelocityField, t: float, cfg: SchemeConfig, step: int = 0
) -> tuple[VelocityField, PressureField, StepReport]:
    """One step: implicit viscous solve, then projection, with diagnostics."""
    tau = cfg.tau
    status: dict = {}
    f_half = cfg.forcing(t + 0.5 * tau) if cfg.forcing is not None else None
    norm_f = norm_velocity(f_half) if f_half is not None else 0.0
    norm_n = norm_velocity(u)

    u_star = viscous_step_monolithic(u, f_half, tau, cfg.viscous, cfg.solver, status)
    norm_star = norm_velocity(u_star)
    div_scale = norm_pressure(PressureField(u.grid, _divergence_raw(_stack(u_star), u.grid)))

    u_new, p_new = pressure_projection(u_star, tau, cfg.solver, status)
    norm_new = norm_velocity(u_new)
    div_res = norm_pressure(PressureField(u.grid, _divergence_raw(_stack(u_new), u.grid)))

    margin = (
        norm_n**2
        + tau / (cfg.nu * spectral_lower_bound(cfg.grid)) * norm_f**2
        - norm_new**2
    )
    _finite_or_raise(norm_n, norm_star, norm_new, div_res, margin)
    report = StepReport(
        step=step,
        t=t + tau,
        norm_state=norm_n,
        norm_quarter=norm_star,
        norm_half=norm_star,
        norm_end=norm_new,
        norm_forcing=norm_f,
        div_residual=div_res,
        div_scale=div_scale,
        cg_iters_total=status.get("cg_iters", 0),
        bound_margin=margin,
    )
    return u_new, p_new, report


def step_decomposed(
    U: DecomposedVelocity, t: float, cfg: SchemeConfig, step: int = 0
) -> tuple[DecomposedVelocity, list[PressureField], StepReport]:
    """One step: forward sweep, backward sweep, per-strip projections."""
    tau = cfg.tau
    part = cfg.partition
    status: dict = {}
    F_half = None
    norm_f = 0.0
    if cfg.forcing is not None:
        F_half = decompose(part, cfg.forcing(t + 0.5 * tau))
        norm_f = norm_decomposed(F_half)
    norm_n = norm_decomposed(U)

    U_quarter = dd_forward_sweep(U, F_half, tau, cfg.viscous, part, cfg.solver, status)
    norm_quarter = norm_decomposed(U_quarter)
    U_half = dd_backward_sweep(U_quarter, tau, cfg.viscous, part, cfg.solver, status)
    norm_half = norm_decomposed(U_half)

    grid = cfg.grid
    div_scale = max(
        norm_pressure(PressureField(grid, _divergence_raw(chi.eta * _stack(c), grid)))
        for chi, c in zip(part.masks, U_half.components)
    )
    U_new, pressures = dd_pressure_substeps(U_half, tau, part, cfg.solver, status)
    norm_new = norm_decomposed(U_new)
    div_res = max(
        norm_pressure(PressureField(grid, _divergence_raw(chi.eta * _stack(c), grid)))
        for chi, c in zip(part.masks, U_new.components)
    )

    margin = math.exp(tau) * norm_n**2 + tau * norm_f**2 - norm_new**2
    _finite_or_raise(norm_n, norm_quarter, norm_half, norm_new, div_res, margin)
    report = StepReport(
        step=step,
        t=t + tau,
        norm_state=norm_n,
        norm_quarter=norm_quarter,
        norm_half=norm_half,
        norm_end=norm_new,
        norm_forcing=norm_f,
        div_residual=div_res,
        div_scale=div_scale,
        cg_iters_total=status.get("cg_iters", 0),
        bound_margin=margin,
    )
    return U_new, pressures, report


def run(cfg: SchemeConfig) -> RunResult:
    """Advance from the initial state to t_final, collecting step reports.

    A solver failure aborts the run; the partial report series is returned
    with completed False rather than raised away.
    """
    from .linsolve import NumericalBreakdownError

    reports: list[StepReport] = []
    if cfg.scheme == "monolithic":
        u = cfg.v.copy()
        p: PressureField | None = None
        try:
            for n in range(cfg.n_steps):
                u, p, rep = step_monolithic(u, n * cfg.tau, cfg, step=n + 1)
                reports.append(rep)
        except (UnconvergedSolveError, NumericalBreakdownError) as exc:
            return RunResult(cfg, reports, u, None, p, None, False, str(exc))
        return RunResult(cfg, reports, u, None, p, None, True)

    part = cfg.partition
    U = decompose(part, cfg.v)
    pressures: list[PressureField] | None = None
    try:
        for n in range(cfg.n_steps):
            U, pressures, rep = step_decomposed(U, n * cfg.tau, cfg, step=n + 1)
            reports.append(rep)
    except (UnconvergedSolveError, NumericalBreakdownError) as exc:
        return RunResult(cfg, reports, recompose(part, U), U, None, pressures, False, str(exc))
    return RunResult(cfg, reports, recompose(part, U), U, None, pressures, True)
