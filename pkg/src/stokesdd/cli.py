"""Command line front end: run, converge, stability, verify.

Configuration is a flat ``key = value`` text file ('#' starts a comment);
every key can also be given as a ``--key value`` flag, which wins over the
file.  Exit codes: 0 success, 1 run or monitor failure, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .grid import GridSpec, PressureField, VelocityField, make_grid
from .linsolve import SolveConfig
from .operators import spectral_lower_bound
from .schemes import RunResult, SchemeConfig, blend_pressures, run
from .verify import (
    ManufacturedCase,
    check_stability,
    error_norms,
    exact_velocity,
    forcing_of,
    make_rng,
    random_velocity,
    verification_checks,
)


class ConfigError(ValueError):
    """Unknown keys, unparsable values, or infeasible settings."""


# key -> (parser, default); the CLI exposes each key as --key
_KEYS: dict[str, tuple] = {
    "l1": (float, 1.0),
    "l2": (float, 1.0),
    "n1": (int, 16),
    "n2": (int, 16),
    "tau": (float, 0.1),
    "t_final": (float, 1.0),
    "nu": (float, 1.0),
    "scheme": (str, "monolithic"),
    "m": (int, 2),
    "overlap": (int, 2),
    "rel_tol": (float, 1e-10),
    "abs_tol": (float, 1e-14),
    "max_iter": (int, 0),
    "forcing": (str, "manufactured"),
    "initial": (str, "manufactured"),
    "amplitude": (float, 1.0),
    "decay": (float, 1.0),
    "seed": (int, 2024),
    "out_dir": (str, "out"),
    "taus": (str, "0.1,0.05,0.025,0.0125"),
    "grids": (str, "16,32,64"),
    "steps": (int, 200),
}

_CHOICES = {"scheme": ("monolithic", "decomposed"), "forcing": ("none", "manufactured"), "initial": ("zero", "manufactured", "random")}


def _parse_value(key: str, raw: str):
    if key not in _KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = _KEYS[key][0]
    try:
        value = kind(raw) if kind is not int else int(str(raw), 10)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r} as {kind.__name__}") from exc
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{key} must be one of {_CHOICES[key]}, got {value!r}")
    return value


def load_config(path: str | Path) -> dict:
    """Parse a flat key = value file into a dict of typed values."""
    conf: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        conf[key] = _parse_value(key, raw)
    return conf


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then the command line flags."""
    conf = {key: default for key, (_, default) in _KEYS.items()}
    if args.config:
        conf.update(load_config(args.config))
    for key in _KEYS:
        given = getattr(args, key, None)
        if given is not None:
            conf[key] = _parse_value(key, given)
    return conf


def _solver_of(conf: dict) -> SolveConfig:
    return SolveConfig(
        rel_tol=conf["rel_tol"],
        abs_tol=conf["abs_tol"],
        max_iter=conf["max_iter"] if conf["max_iter"] > 0 else None,
    )


def _case_of(conf: dict) -> ManufacturedCase:
    return ManufacturedCase(amplitude=conf["amplitude"], decay=conf["decay"], nu=conf["nu"])


def build_scheme_config(conf: dict, grid: GridSpec | None = None, tau: float | None = None) -> SchemeConfig:
    grid = grid or make_grid(conf["l1"], conf["l2"], conf["n1"], conf["n2"])
    case = _case_of(conf)
    if conf["initial"] == "zero":
        v = VelocityField.zeros(grid)
    elif conf["initial"] == "manufactured":
        v = exact_velocity(case, grid, 0.0)
    else:
        v = random_velocity(grid, make_rng(conf["seed"]))
    forcing = forcing_of(case, grid) if conf["forcing"] == "manufactured" else None
    return SchemeConfig(
        v=v,
        tau=tau if tau is not None else conf["tau"],
        t_final=conf["t_final"],
        nu=conf["nu"],
        scheme=conf["scheme"],
        m=conf["m"],
        overlap=conf["overlap"],
        solver=_solver_of(conf),
        forcing=forcing,
    )


# -- output writers; floats go through repr for stable shortest round-trips

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_steps_csv(path: Path, reports) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["step", "t", "norm_state", "norm_quarter", "norm_half", "norm_end", "div_residual", "cg_iters_total", "bound_margin"]
        )
        for rep in reports:
            writer.writerow(
                [
                    rep.step,
                    _fmt(rep.t),
                    _fmt(rep.norm_state),
                    _fmt(rep.norm_quarter),
                    _fmt(rep.norm_half),
                    _fmt(rep.norm_end),
                    _fmt(rep.div_residual),
                    rep.cg_iters_total,
                    _fmt(rep.bound_margin),
                ]
            )


def write_velocity_csv(path: Path, u: VelocityField) -> None:
    grid = u.grid
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["i1", "i2", "x1", "x2", "u1", "u2"])
        for i1 in range(grid.n1 + 1):
            for i2 in range(grid.n2 + 1):
                writer.writerow(
                    [i1, i2, _fmt(i1 * grid.h1), _fmt(i2 * grid.h2), _fmt(u.u1[i1, i2]), _fmt(u.u2[i1, i2])]
                )


def write_pressure_csv(path: Path, p: PressureField) -> None:
    grid = p.grid
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["i1", "i2", "x1", "x2", "p"])
        for i1 in range(1, grid.n1 + 1):
            for i2 in range(1, grid.n2 + 1):
                writer.writerow([i1, i2, _fmt(i1 * grid.h1), _fmt(i2 * grid.h2), _fmt(p.p[i1, i2])])


def _write_manifest(out_dir: Path, command: str, conf: dict, extra: dict, started: float) -> None:
    manifest = {
        "command": command,
        "config": {k: conf[k] for k in sorted(conf)},
        "duration_seconds": time.perf_counter() - started,
        **extra,
    }
    with open(out_dir / "manifest.json", "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _monitors_of(result: RunResult) -> dict:
    cfg = result.config
    if cfg.scheme == "monolithic":
        stab = check_stability(result.reports, cfg.tau, "monolithic", nu_delta_h=cfg.nu * spectral_lower_bound(cfg.grid))
    else:
        stab = check_stability(result.reports, cfg.tau, "decomposed")
    return {
        "completed": result.completed,
        "stability_passed": stab.passed,
        "worst_margin": stab.worst_margin,
        "message": result.message or stab.message,
    }


def cmd_run(conf: dict) -> int:
    out_dir = Path(conf["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    cfg = build_scheme_config(conf)
    result = run(cfg)

    write_steps_csv(out_dir / "steps.csv", result.reports)
    outputs = {"steps": "steps.csv", "velocity": "velocity.csv"}
    write_velocity_csv(out_dir / "velocity.csv", result.velocity)
    if cfg.scheme == "monolithic" and result.pressure is not None:
        write_pressure_csv(out_dir / "pressure.csv", result.pressure)
        outputs["pressure"] = "pressure.csv"
    elif result.pressures is not None:
        write_pressure_csv(out_dir / "pressure_composite.csv", blend_pressures(cfg.partition, result.pressures))
        outputs["pressure_composite"] = "pressure_composite.csv"

    monitors = _monitors_of(result)
    extra = {
        "grid": {"l1": cfg.grid.l1, "l2": cfg.grid.l2, "n1": cfg.grid.n1, "n2": cfg.grid.n2},
        "tau_effective": cfg.tau,
        "n_steps": cfg.n_steps,
        "outputs": outputs,
        "monitors": monitors,
    }
    _write_manifest(out_dir, "run", conf, extra, started)
    ok = monitors["completed"] and monitors["stability_passed"]
    print(f"run: {cfg.n_steps} steps, monitors {'pass' if ok else 'FAIL'}")
    return 0 if ok else 1


def _int_list(raw: str, what: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} list {raw!r}") from exc


def _float_list(raw: str, what: str) -> list[float]:
    try:
        return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse {what} list {raw!r}") from exc


def cmd_converge(conf: dict) -> int:
    """Temporal and spatial refinement studies against the exact solution.

    The temporal study fixes the configured grid and halves tau; the gap
    series is the distance between the two schemes at equal tau.  The
    spatial study walks the grid list at the smallest tau.
    """
    out_dir = Path(conf["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    taus = _float_list(conf["taus"], "taus")
    grids = _int_list(conf["grids"], "grids")
    if not taus or not grids:
        raise ConfigError("converge needs non-empty taus and grids lists")
    case = _case_of(conf)
    rows: list[list] = []
    ok = True

    def final_velocity(grid: GridSpec, tau: float, scheme: str) -> VelocityField:
        nonlocal ok
        sub = dict(conf, scheme=scheme, initial="manufactured", forcing="manufactured")
        cfg = build_scheme_config(sub, grid=grid, tau=tau)
        result = run(cfg)
        ok = ok and result.completed
        return result.velocity

    grid = make_grid(conf["l1"], conf["l2"], conf["n1"], conf["n2"])
    exact_final = exact_velocity(case, grid, conf["t_final"])
    for scheme in ("monolithic", "decomposed"):
        finals = [final_velocity(grid, tau, scheme) for tau in taus]
        errors = [error_norms(u, exact_final) for u in finals]
        for k, (tau, err) in enumerate(zip(taus, errors)):
            ratio = errors[k - 1] / err if k else float("nan")
            order = np.log2(ratio) if k else float("nan")
            rows.append(["tau", scheme, conf["n1"], tau, err, ratio, order])
        if scheme == "decomposed":
            monos = [final_velocity(grid, tau, "monolithic") for tau in taus]
            gaps = [error_norms(a, b) for a, b in zip(finals, monos)]
            for k, (tau, gap) in enumerate(zip(taus, gaps)):
                ratio = gaps[k - 1] / gap if k else float("nan")
                order = np.log2(ratio) if k else float("nan")
                rows.append(["gap", scheme, conf["n1"], tau, gap, ratio, order])

    tau_min = min(taus)
    errors = []
    for n in grids:
        g = make_grid(conf["l1"], conf["l2"], n, n)
        u = final_velocity(g, tau_min, conf["scheme"])
        errors.append(error_norms(u, exact_velocity(case, g, conf["t_final"])))
    for k, (n, err) in enumerate(zip(grids, errors)):
        ratio = errors[k - 1] / err if k else float("nan")
        order = np.log2(ratio) if k else float("nan")
        rows.append(["grid", conf["scheme"], n, tau_min, err, ratio, order])

    with open(out_dir / "converge.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["study", "scheme", "n", "tau", "error", "ratio", "order"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], _fmt(row[3]), _fmt(row[4]), _fmt(row[5]), _fmt(row[6])])
    _write_manifest(out_dir, "converge", conf, {"rows": len(rows), "completed": ok, "outputs": {"table": "converge.csv"}}, started)
    for row in rows:
        print(f"{row[0]:>5} {row[1]:>11} n={row[2]:>3} tau={row[3]:<8g} error={row[4]:.4e} order={row[6]:.2f}")
    return 0 if ok else 1


def cmd_stability(conf: dict) -> int:
    """Long unforced runs from random data across a ladder of time steps."""
    out_dir = Path(conf["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    taus = _float_list(conf["taus"], "taus")
    grid = make_grid(conf["l1"], conf["l2"], conf["n1"], conf["n2"])
    rng = make_rng(conf["seed"])
    v = random_velocity(grid, rng)
    all_ok = True
    with open(out_dir / "stability.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["tau", "m", "step", "norm_state", "norm_end", "margin"])
        for tau in taus:
            cfg = SchemeConfig(
                v=v,
                tau=tau,
                t_final=tau * conf["steps"],
                nu=conf["nu"],
                scheme=conf["scheme"],
                m=conf["m"],
                overlap=conf["overlap"],
                solver=_solver_of(conf),
                forcing=None,
            )
            result = run(cfg)
            if cfg.scheme == "monolithic":
                stab = check_stability(result.reports, cfg.tau, "monolithic", nu_delta_h=cfg.nu * spectral_lower_bound(grid))
            else:
                stab = check_stability(result.reports, cfg.tau, "decomposed")
            all_ok = all_ok and result.completed and stab.passed
            for rep, margin in zip(result.reports, stab.margins):
                writer.writerow([_fmt(tau), cfg.m, rep.step, _fmt(rep.norm_state), _fmt(rep.norm_end), _fmt(margin)])
            print(f"tau={tau:<8g} steps={len(result.reports)} worst margin={stab.worst_margin:.3e} {'pass' if stab.passed else 'FAIL'}")
    _write_manifest(out_dir, "stability", conf, {"completed": all_ok, "outputs": {"table": "stability.csv"}}, started)
    return 0 if all_ok else 1


def cmd_verify(conf: dict) -> int:
    results = verification_checks(seed=conf["seed"])
    for res in results:
        print(f"{'PASS' if res.passed else 'FAIL'} {res.name}: {res.detail}")
    return 0 if all(res.passed for res in results) else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="stokesdd", description="Unsteady Stokes solver on overlapping strips")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "advance one configuration and write per-step diagnostics"),
        ("converge", "tau and grid refinement error tables"),
        ("stability", "long unforced runs across a tau ladder"),
        ("verify", "small-grid correctness suite"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key = value file")
        for key in _KEYS:
            p.add_argument(f"--{key}", dest=key, metavar="V")

    try:
        args = parser.parse_args(argv)
        conf = resolve_config(args)
        handler = {"run": cmd_run, "converge": cmd_converge, "stability": cmd_stability, "verify": cmd_verify}[args.command]
        return handler(conf)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    console_main()
