"""Command-line entry point: ``tcsk <command> [--config FILE] [--output DIR]``.

Commands: continue, jflow, calabi, geodesic, energy, check. Every run
writes ``summary.json`` to the output directory; solver and flow runs also
write ``run_log.csv`` and terminal fields in the TCSK format.

Exit codes: 0 success, 1 a ``check`` criterion failed, 2 configuration
error, 3 solver stall or non-convergence, 4 flow step underflow, 5 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import checks
from .config import COMMANDS, OUTPUT_ENV, build_chi, build_field, load_config, parse_config
from .exceptions import ConfigError, ConvergenceError, FieldFileError, InvalidMetricError
from .fieldio import atomic_write_text, write_field, write_json
from .functionals import class_constants, energy_report, j_chi, k_energy
from .geodesic import convexity_profile, second_derivative_identity_check, solve_geodesic
from .solver import NewtonSettings, continue_path

log = logging.getLogger("tcsk")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_STALL, EXIT_UNDERFLOW, EXIT_IO = 0, 1, 2, 3, 4, 5
LOG_COLUMNS = ("step", "t_or_time", "residual_sup", "j_chi", "k_energy", "twisted", "dt_or_step_halvings")


def _write_log(path, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for row in rows:
        writer.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in LOG_COLUMNS])
    atomic_write_text(path, buf.getvalue())


def _settings(cfg):
    return NewtonSettings(**cfg.solver)


def _energies(phi, chi, constants, t):
    jc = j_chi(phi, chi, constants=constants)
    ke = k_energy(phi, r_bar=constants.r_bar)
    return jc, ke, (1.0 - t) * jc + t * ke


def cmd_continue(cfg, out):
    chi = build_chi(cfg)
    settings = _settings(cfg)
    run = continue_path(chi, cfg.schedule, settings, predictor=cfg.predictor)
    constants = class_constants(chi)
    rows = []
    for i, (rec, st) in enumerate(zip(run.records, run.states)):
        jc, ke, tw = _energies(st.phi, chi, constants, rec.t)
        rows.append({
            "step": i, "t_or_time": rec.t, "residual_sup": rec.residual_sup,
            "j_chi": jc, "k_energy": ke, "twisted": tw, "dt_or_step_halvings": rec.halvings,
        })
    _write_log(out / "run_log.csv", rows)
    if run.states:
        write_field(out / "phi_final.tcsk", run.states[-1].phi)
    summary = {
        "status": run.status,
        "r_chi": run.r_estimate,
        "stalled_at": run.stalled_at,
        "failure": run.failure,
        "accepted_t": run.ts,
        "newton_iterations": [r.newton_iterations for r in run.records],
        "final_residual": run.records[-1].residual_sup if run.records else None,
        "tolerances": {"tol_outer": settings.tol_outer, "max_newton": settings.max_newton},
    }
    return (EXIT_OK if run.completed else EXIT_STALL), summary


def cmd_flow(cfg, out, kind):
    from .flows import run_flow

    chi = build_chi(cfg)
    grid = cfg.grid
    start = build_field(grid, cfg.flow.get("initial", {"kind": "zero"}), "flow.initial", cfg.base_dir)
    opts = {k: cfg.flow[k] for k in ("dt", "dt_min", "dt_max", "max_steps", "tol") if k in cfg.flow}
    t = cfg.t if kind == "twisted-calabi" else 0.0
    run = run_flow(start, kind, chi, t=t, **opts)
    rows = [{
        "step": r.step, "t_or_time": r.time, "residual_sup": r.residual_sup, "j_chi": r.j_chi,
        "k_energy": r.k_energy, "twisted": r.energy, "dt_or_step_halvings": r.dt,
    } for r in run.records]
    _write_log(out / "run_log.csv", rows)
    write_field(out / "phi_final.tcsk", run.state.phi)
    summary = {
        "status": run.stop_reason,
        "kind": kind,
        "t": t,
        "steps": run.steps,
        "rejected_steps": run.rejected,
        "final_time": run.records[-1].time,
        "final_residual": run.records[-1].residual_sup,
        "final_energy": run.records[-1].energy,
        "tolerances": {"tol": opts.get("tol", 1e-9)},
    }
    code = {"converged": EXIT_OK, "step-underflow": EXIT_UNDERFLOW}.get(run.stop_reason, EXIT_STALL)
    return code, summary


def cmd_geodesic(cfg, out):
    from .geodesic import geodesic_settings

    grid = cfg.grid
    geo = cfg.geodesic
    phi0 = build_field(grid, geo.get("phi0", {"kind": "zero"}), "geodesic.phi0", cfg.base_dir)
    phi1 = build_field(grid, geo.get("phi1", {"kind": "zero"}), "geodesic.phi1", cfg.base_dir)
    extra = {"tol_outer": geo["tol"]} if "tol" in geo else {}
    settings = geodesic_settings(**{**cfg.solver, **extra})
    eps = geo.get("eps", 1e-2)
    try:
        path = solve_geodesic(
            phi0, phi1, eps, geo.get("n_t", 17), settings, allow_n2=geo.get("allow_n2", False)
        )
    except ValueError as exc:
        if isinstance(exc, InvalidMetricError):
            raise
        raise ConfigError(str(exc), "geodesic") from None
    chi = build_chi(cfg)
    rows = [{
        "step": i, "t_or_time": float(i), "residual_sup": r, "j_chi": float("nan"),
        "k_energy": float("nan"), "twisted": float("nan"), "dt_or_step_halvings": 0,
    } for i, r in enumerate(path.history)]
    _write_log(out / "run_log.csv", rows)
    manifest = path.export(out / "path")
    profiles = {
        name: convexity_profile(path, name, chi, t=cfg.t).second_differences.tolist()
        for name in ("j_chi", "k_energy", "twisted")
    }
    summary = {
        "status": "converged",
        "eps": eps,
        "n_t": path.n_t,
        "residual": path.residual,
        "newton_iterations": path.iterations,
        "manifest": str(manifest.relative_to(out)),
        "second_differences": profiles,
        "min_second_difference": {k: min(v) for k, v in profiles.items()},
        "identity_gap": second_derivative_identity_check(path, chi),
        "tolerances": {"tol_geo": settings.tol_outer},
    }
    return EXIT_OK, summary


def cmd_energy(cfg, out):
    chi = build_chi(cfg)
    spec = cfg.energy.get("field", {"kind": "zero"})
    phi = build_field(cfg.grid, spec, "energy.field", cfg.base_dir)
    report = energy_report(phi, chi, t=cfg.energy.get("t", cfg.t), k=cfg.energy.get("k", 1), seed=cfg.seed)
    atomic_write_text(out / "energy.json", report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK, {"status": "ok", "report": report.to_dict()}


def cmd_check(cfg, out):
    results = checks.run_suite(cfg.check.get("criteria"), echo=print)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    summary = {
        "status": "passed" if passed == len(results) else "failed",
        "criteria": [r.to_dict() for r in results],
    }
    return (EXIT_OK if passed == len(results) else EXIT_CHECK), summary


DISPATCH = {
    "continue": cmd_continue,
    "jflow": lambda cfg, out: cmd_flow(cfg, out, "j-flow"),
    "calabi": lambda cfg, out: cmd_flow(cfg, out, "twisted-calabi"),
    "geodesic": cmd_geodesic,
    "energy": cmd_energy,
    "check": cmd_check,
}


def output_dir(cfg, override=None):
    """CLI flag beats the environment variable, which beats the config file."""
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def run(cfg, out=None):
    """Execute a validated configuration; returns the process exit status."""
    out = output_dir(cfg, out)
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        code, summary = DISPATCH[cfg.command](cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (FieldFileError, OSError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ConvergenceError, InvalidMetricError) as exc:
        code, summary = EXIT_STALL, {"status": "failed", "failure": f"{type(exc).__name__}: {exc}"}
    summary.update({
        "command": cfg.command,
        "exit_code": code,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "wall_time_s": round(time.perf_counter() - start, 6),
    })
    try:
        write_json(out / "summary.json", _jsonable(summary))
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return code


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def build_parser():
    p = argparse.ArgumentParser(prog="tcsk", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("-c", "--config", help="TOML run configuration")
    p.add_argument("-o", "--output", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--field", help="TCSK field file for the energy command")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
            if cfg.command_set and cfg.command != args.command:
                raise ConfigError(f"config is for {cfg.command!r}, not {args.command!r}", "command")
        else:
            cfg = parse_config("")
        cfg.command = args.command
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("must be >= 0", "seed")
            cfg.seed = args.seed
        if args.field:
            if args.command != "energy":
                raise ConfigError("--field only applies to the energy command", "field")
            cfg.energy["field"] = {"kind": "file", "path": str(Path(args.field).resolve())}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(cfg, args.output)


if __name__ == "__main__":
    sys.exit(main())
