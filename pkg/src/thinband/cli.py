"""Command line entry point.

Subcommands: solve-thin, solve-limit, average, converge, validate.  All
numeric outputs are deterministic; wall-clock data is stored separately in
timing.json.  Exit codes: 0 success, 1 solver failure, 2 configuration
error.  THINFILM_THREADS caps the parallelism of converge.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import averaging, experiments, geometry, io, surface, thin
from .errors import GeometryError, ScenarioError, SolverError, ValidationError
from .scenario import builtin_scenario, builtin_scenario_names, load_scenario


class ConfigError(Exception):
    pass


def _load_scenario(spec, p_override=None):
    if os.path.exists(spec):
        scenario = load_scenario(spec)
    elif spec in builtin_scenario_names():
        scenario = builtin_scenario(spec)
    else:
        raise ConfigError(
            f"scenario {spec!r} is neither an existing file nor one of the "
            f"built-in names {builtin_scenario_names()}"
        )
    if p_override is not None:
        d = scenario.to_dict()
        d["p"] = p_override
        from .scenario import Scenario

        scenario = Scenario.from_dict(d)
    return scenario


def _parse_floats(text, what):
    try:
        vals = [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"could not parse {what} {text!r}: {exc}")
    if not vals:
        raise ConfigError(f"empty {what} list")
    return vals


def _snapshot_times(args, t_end):
    if args.snapshots is None:
        return [0.0, t_end]
    return _parse_floats(args.snapshots, "snapshot time")


def _ensure_outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}")
    return path


def _workers(args):
    if args.workers is not None:
        return args.workers
    env = os.environ.get("THINFILM_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"THINFILM_THREADS={env!r} is not an integer")
    return 1


def _add_common(p):
    p.add_argument("--scenario", required=True,
                   help="scenario JSON path or built-in name")
    p.add_argument("--p", type=float, default=None, dest="p_override",
                   help="override the exponent p of the scenario")
    p.add_argument("--n-theta", type=int, default=64)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--snapshots", default=None,
                   help="comma-separated snapshot times (default: 0 and t_end)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thinband",
        description="nonlinear diffusion in a moving thin band and its "
        "on-curve limit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pt = sub.add_parser("solve-thin", help="solve the band problem")
    _add_common(pt)
    pt.add_argument("--eps", type=float, required=True)
    pt.add_argument("--n-sigma", type=int, default=16)
    pt.add_argument("--initial", choices=["lifted", "zero"], default="lifted")

    pl = sub.add_parser("solve-limit", help="solve the limit system on the curve")
    _add_common(pl)

    pa = sub.add_parser("average", help="average a completed band run")
    pa.add_argument("--run", required=True, help="directory of a solve-thin run")
    pa.add_argument("--out", required=True)

    pc = sub.add_parser("converge", help="epsilon-ladder convergence study")
    _add_common(pc)
    pc.add_argument("--eps", required=True,
                    help="comma-separated strictly decreasing band widths")
    pc.add_argument("--n-sigma", type=int, default=16)
    pc.add_argument("--n-snapshots", type=int, default=6)
    pc.add_argument("--workers", type=int, default=None)

    pv = sub.add_parser("validate", help="finite-difference geometry check")
    pv.add_argument("--scenario", required=True)
    pv.add_argument("--out", default=None,
                    help="optional directory for the JSON report")
    return parser


def _cmd_solve_thin(args):
    scenario = _load_scenario(args.scenario, args.p_override)
    t_end = scenario.T if args.t_end is None else args.t_end
    grid = thin.ThinGrid(n_theta=args.n_theta, n_sigma=args.n_sigma, eps=args.eps)
    start = time.perf_counter()
    traj = thin.solve(
        scenario, grid, args.dt, snapshot_times=_snapshot_times(args, t_end),
        t_end=t_end, initial=args.initial,
    )
    elapsed = time.perf_counter() - start
    outdir = _ensure_outdir(args.out)
    io.write_thin_run(outdir, scenario, traj, args.dt)
    io.write_timing(outdir, {"solve": elapsed})
    print(f"thin run written to {outdir} ({len(traj.states)} snapshots)")
    return 0


def _cmd_solve_limit(args):
    scenario = _load_scenario(args.scenario, args.p_override)
    t_end = scenario.T if args.t_end is None else args.t_end
    grid = surface.SurfaceGrid(n_theta=args.n_theta)
    start = time.perf_counter()
    traj = surface.solve(
        scenario, grid, args.dt, snapshot_times=_snapshot_times(args, t_end),
        t_end=t_end,
    )
    elapsed = time.perf_counter() - start
    outdir = _ensure_outdir(args.out)
    io.write_surface_run(outdir, scenario, traj, args.dt)
    io.write_timing(outdir, {"solve": elapsed})
    print(f"limit run written to {outdir} ({len(traj.states)} snapshots)")
    return 0


def _cmd_average(args):
    scenario, _, traj = io.read_thin_run(args.run)
    start = time.perf_counter()
    trace = averaging.average_trajectory(scenario, traj)
    elapsed = time.perf_counter() - start
    outdir = _ensure_outdir(args.out)
    io.write_averaged_trace(outdir, scenario, trace)
    io.write_timing(outdir, {"average": elapsed})
    print(f"averaged trace written to {outdir}")
    return 0


def _cmd_converge(args):
    scenario = _load_scenario(args.scenario, args.p_override)
    eps_values = _parse_floats(args.eps, "eps")
    if any(e2 >= e1 for e1, e2 in zip(eps_values, eps_values[1:])):
        raise ConfigError(f"eps list must be strictly decreasing, got {eps_values}")
    outdir = _ensure_outdir(args.out)
    report = experiments.convergence_study(
        scenario, eps_values, n_theta=args.n_theta, n_sigma=args.n_sigma,
        dt=args.dt, t_end=args.t_end, n_snapshots=args.n_snapshots,
        workers=_workers(args),
    )
    io.write_report(outdir, report)
    failed = [s for s in report.statuses if s != "ok"]
    with open(os.path.join(outdir, "report.txt")) as fh:
        print(fh.read(), end="")
    if failed:
        print(f"study FAILED: {failed[0]}", file=sys.stderr)
        return 1
    return 0


def _cmd_validate(args):
    scenario = _load_scenario(args.scenario)
    report = geometry.validate_frames(scenario)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out is not None:
        outdir = _ensure_outdir(args.out)
        with open(os.path.join(outdir, "validation.json"), "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


_COMMANDS = {
    "solve-thin": _cmd_solve_thin,
    "solve-limit": _cmd_solve_limit,
    "average": _cmd_average,
    "converge": _cmd_converge,
    "validate": _cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ScenarioError, ValidationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, GeometryError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
