"""Acceptance suite.

One test per numbered criterion, each printing a single PASS line with the
measured quantity next to its threshold (run with -s to see them).  These are
the binding end-to-end checks; the per-module tests cover the same ground at
finer grain.  Thresholds are fixed here on purpose: loosening them is a
design change, not a test fix.
"""

import math

import numpy as np
import pytest

from stokesdd import (
    DecomposedVelocity,
    SchemeConfig,
    SolveConfig,
    VelocityField,
    ViscousOperator,
    apply_divergence,
    apply_gradient,
    apply_viscous,
    assemble_dense,
    build_strips,
    decompose,
    dot_decomposed,
    dot_pressure,
    dot_velocity,
    error_norms,
    make_grid,
    norm_pressure,
    norm_velocity,
    run,
    spectral_lower_bound,
    step_decomposed,
    step_monolithic,
)
from stokesdd.verify import (
    ManufacturedCase,
    exact_velocity,
    forcing_of,
    make_rng,
    oracle_step,
    random_decomposed,
    random_velocity,
    random_pressure,
)

TIGHT = SolveConfig(rel_tol=1e-12, abs_tol=1e-15)


def report(line: str) -> None:
    print(line)


def test_criterion_01_adjointness():
    # |(grad p, u) + (p, div u)| <= 1e-13 ||p|| ||u||, 1000 pairs, grids 8..64
    rng = make_rng(101)
    worst = 0.0
    for n in (8, 16, 32, 64):
        g = make_grid(1.0, 1.0, n, n)
        for _ in range(250):
            p = random_pressure(g, rng)
            u = random_velocity(g, rng)
            s = dot_velocity(apply_gradient(p), u) + dot_pressure(p, apply_divergence(u))
            worst = max(worst, abs(s) / (norm_pressure(p) * norm_velocity(u)))
    assert worst <= 1e-13
    report(f"PASS criterion 1 (adjointness): worst relative defect {worst:.2e} <= 1e-13")


def test_criterion_02_spectral_bound():
    # dense smallest eigenvalue equals the closed form, and coercivity holds
    worst_eig = 0.0
    for dims in [(1.0, 1.0, 2, 2), (1.0, 1.0, 4, 4), (1.0, 1.0, 8, 8), (2.0, 1.0, 8, 4), (1.0, 1.5, 5, 7)]:
        g = make_grid(*dims)
        smallest = np.linalg.eigvalsh(assemble_dense("viscous", g, nu=1.0))[0]
        worst_eig = max(worst_eig, abs(smallest - spectral_lower_bound(g)) / spectral_lower_bound(g))
    assert worst_eig <= 1e-10

    rng = make_rng(102)
    g = make_grid(1.0, 1.0, 16, 16)
    worst_slack = math.inf
    for nu in (1.0, 0.3):
        op = ViscousOperator(g, nu)
        bound = nu * spectral_lower_bound(g)
        for _ in range(500):
            u = random_velocity(g, rng)
            slack = dot_velocity(apply_viscous(op, u), u) - bound * dot_velocity(u, u)
            worst_slack = min(worst_slack, slack)
    assert worst_slack >= -1e-10
    report(
        f"PASS criterion 2 (spectral bound): eig defect {worst_eig:.2e} <= 1e-10, "
        f"coercivity slack {worst_slack:.2e} >= -1e-10"
    )


def test_criterion_03_partition_normalization():
    worst = 0.0
    for grid in (make_grid(1.0, 1.0, 24, 10), make_grid(2.0, 0.5, 17, 8)):
        for m in (1, 2, 3, 4):
            for overlap in (0, 1, 2, 4):
                if grid.n1 // m <= overlap:
                    continue
                part = build_strips(grid, m, overlap)
                total = sum(chi.eta**2 for chi in part.masks)
                worst = max(worst, float(np.max(np.abs(total - 1.0))))
    assert worst <= 1e-14
    report(f"PASS criterion 3 (partition of unity): worst node deviation {worst:.2e} <= 1e-14")


def test_criterion_04_triangular_splitting():
    g = make_grid(1.0, 1.0, 4, 4)
    rng = make_rng(104)
    worst = 0.0
    for m in (2, 3):
        # m = 3 on four cells leaves no room for overlapping ramps
        part = build_strips(g, m, 1 if m == 2 else 0)
        full = assemble_dense("coupling", g, nu=1.0, masks=part.masks)
        lo = assemble_dense("coupling_lower", g, nu=1.0, masks=part.masks)
        up = assemble_dense("coupling_upper", g, nu=1.0, masks=part.masks)
        assert np.array_equal(lo + up, full)
        from stokesdd import apply_coupling_lower, apply_coupling_upper

        op = ViscousOperator(g, nu=1.0)
        for _ in range(20):
            U = random_decomposed(g, m, rng)
            V = random_decomposed(g, m, rng)
            a1 = dot_decomposed(apply_coupling_lower(part.masks, op, U), V)
            a2 = dot_decomposed(U, apply_coupling_upper(part.masks, op, V))
            denom = max(abs(a1), abs(a2), 1e-300)
            worst = max(worst, abs(a1 - a2) / denom)
    assert worst <= 1e-12
    report(
        f"PASS criterion 4 (triangular splitting): exact block sum, adjointness defect {worst:.2e} <= 1e-12"
    )


def test_criterion_05_oracle_equivalence():
    g = make_grid(1.0, 1.0, 4, 4)
    rng = make_rng(105)
    worst = 0.0
    for trial in range(20):
        f = random_velocity(g, rng)
        v = random_velocity(g, rng)

        cfg = SchemeConfig(v=v, tau=0.2, t_final=0.2, solver=TIGHT, forcing=lambda t: f)
        got, _, _ = step_monolithic(v, 0.0, cfg)
        want = oracle_step(v, cfg)
        diff = error_norms(got, want)
        worst = max(worst, diff / max(norm_velocity(want), 1e-300))

        for m in (1, 2):
            cfg = SchemeConfig(
                v=v, tau=0.2, t_final=0.2, scheme="decomposed", m=m,
                overlap=1 if m == 2 else 0, solver=TIGHT, forcing=lambda t: f,
            )
            U = decompose(cfg.partition, v)
            got_u, _, _ = step_decomposed(U, 0.0, cfg)
            want_u = oracle_step(U, cfg)
            diff = math.sqrt(
                sum(error_norms(a, b) ** 2 for a, b in zip(got_u.components, want_u.components))
            )
            worst = max(worst, diff / max(math.sqrt(dot_decomposed(want_u, want_u)), 1e-300))
    assert worst <= 1e-8
    report(f"PASS criterion 5 (oracle equivalence): worst relative step difference {worst:.2e} <= 1e-8")


def test_criterion_06_unconditional_stability():
    g = make_grid(1.0, 1.0, 16, 16)
    rng = make_rng(106)
    worst_growth = 0.0
    for m in (2, 3):
        v = random_velocity(g, rng)
        for tau in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
            cfg = SchemeConfig(
                v=v, tau=tau, t_final=200 * tau, scheme="decomposed", m=m, overlap=2,
            )
            res = run(cfg)
            assert res.completed, f"m={m} tau={tau}: {res.message}"
            norms = [res.reports[0].norm_state] + [r.norm_end for r in res.reports]
            assert all(np.isfinite(norms))
            for a, b in zip(norms, norms[1:]):
                if a > 0:
                    worst_growth = max(worst_growth, b / a - 1.0)
    assert worst_growth <= 1e-10
    report(
        f"PASS criterion 6 (unconditional stability): worst per-step growth {worst_growth:.2e} <= 1e-10"
    )


def test_criterion_07_per_step_estimate():
    case = ManufacturedCase()
    worst = math.inf
    for m, overlap in ((2, 2), (3, 2)):
        g = make_grid(1.0, 1.0, 32, 32)
        cfg = SchemeConfig(
            v=exact_velocity(case, g, 0.0), tau=0.05, t_final=0.5,
            scheme="decomposed", m=m, overlap=overlap, forcing=forcing_of(case, g),
        )
        res = run(cfg)
        assert res.completed
        for r in res.reports:
            scale = math.exp(cfg.tau) * r.norm_state**2 + cfg.tau * r.norm_forcing**2
            worst = min(worst, r.bound_margin / max(scale, 1e-300))
    assert worst >= -1e-10
    report(f"PASS criterion 7 (per-step estimate): worst normalized margin {worst:.2e} >= -1e-10")


def test_criterion_08_projection_residual():
    case = ManufacturedCase()
    g = make_grid(1.0, 1.0, 16, 16)
    tol = 1e-10
    solver = SolveConfig(rel_tol=tol, abs_tol=1e-14)
    worst = 0.0
    for scheme, m in (("monolithic", 1), ("decomposed", 2)):
        cfg = SchemeConfig(
            v=exact_velocity(case, g, 0.0), tau=0.05, t_final=0.5, scheme=scheme,
            m=m, overlap=2, solver=solver, forcing=forcing_of(case, g),
        )
        res = run(cfg)
        assert res.completed
        for r in res.reports:
            scale = max(r.div_scale, r.norm_end)
            worst = max(worst, r.div_residual / max(scale, 1e-300))
    assert worst <= 1e2 * tol
    report(
        f"PASS criterion 8 (projection residual): worst residual/scale {worst:.2e} <= {1e2 * tol:.0e}"
    )


def test_criterion_09_temporal_convergence():
    # Errors are measured against a same-scheme run at tau/8: the spatial
    # error is identical for every run on this grid and would otherwise
    # swamp the temporal term being refined.  The 4x1 domain keeps the
    # strip blending gentle so the decomposed ladder sits in its
    # first-order regime at these step sizes.  Takes a few minutes.
    case = ManufacturedCase()
    grid = make_grid(4.0, 1.0, 64, 64)
    taus = [0.025, 0.0125, 0.00625, 0.003125]
    ref_tau = taus[-1] / 8
    window = (1.7, 2.3)

    def final(scheme, tau):
        cfg = SchemeConfig(
            v=exact_velocity(case, grid, 0.0),
            tau=tau,
            t_final=0.5,
            nu=1.0,
            scheme=scheme,
            m=2,
            overlap=16,
            solver=SolveConfig(rel_tol=1e-10, abs_tol=1e-14),
            forcing=forcing_of(case, grid),
        )
        result = run(cfg)
        assert result.completed, result.message
        return result.velocity

    def ratios_of(errors):
        return [errors[k - 1] / errors[k] for k in range(1, len(errors))]

    finals = {}
    measured = {}
    for scheme in ("monolithic", "decomposed"):
        finals[scheme] = [final(scheme, tau) for tau in taus]
        ref = final(scheme, ref_tau)
        errors = [error_norms(u, ref) for u in finals[scheme]]
        measured[scheme] = ratios_of(errors)
        assert all(window[0] <= r <= window[1] for r in measured[scheme]), (scheme, errors, measured[scheme])

    gaps = [error_norms(a, b) for a, b in zip(finals["decomposed"], finals["monolithic"])]
    measured["gap"] = ratios_of(gaps)
    assert all(window[0] <= r <= window[1] for r in measured["gap"]), (gaps, measured["gap"])

    shown = {name: [round(r, 3) for r in series] for name, series in measured.items()}
    report(
        f"PASS criterion 9 (temporal convergence): halving ratios mono {shown['monolithic']}, "
        f"dd {shown['decomposed']}, gap {shown['gap']} all within [{window[0]}, {window[1]}]"
    )


def test_criterion_10_reproducibility(tmp_path, capsys):
    from stokesdd.cli import main

    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out

    args = [
        "run", "--n1", "16", "--n2", "16", "--tau", "0.05", "--t_final", "0.25",
        "--scheme", "decomposed", "--m", "2", "--overlap", "2",
        "--initial", "random", "--seed", "11",
    ]
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(args + ["--out_dir", str(d)]) == 0
    for name in ("steps.csv", "velocity.csv", "pressure_composite.csv"):
        assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
    report("PASS criterion 10 (reproducibility): verify exits 0, reruns byte-identical")
