"""File formats: CSV tables, JSON manifests, and their readers.

Every run directory contains a manifest.json declaring each output file and
every parameter needed to reproduce the run byte for byte.  Wall-clock data
goes to a separate timing.json so the manifest itself is deterministic.
Floats are written with repr-faithful precision ("%.17g") so a read/write
round trip is exact.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np
import scipy
import sympy

from . import __version__
from .averaging import AveragedTrace
from .errors import ValidationError
from .scenario import Scenario
from .surface import SurfaceGrid, SurfaceState, SurfaceTrajectory
from .thin import ThinGrid, ThinState, ThinTrajectory

SCHEMA = "thinband/1"

_FMT = "%.17g"


def _f(x):
    return _FMT % float(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _library_versions():
    return {
        "thinband": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
    }


def write_manifest(outdir, kind, payload, outputs):
    """Write manifest.json with sorted keys and no timestamps."""
    manifest = {
        "schema": SCHEMA,
        "kind": kind,
        "versions": _library_versions(),
        "outputs": sorted(outputs),
    }
    manifest.update(payload)
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_timing(outdir, seconds_by_stage):
    path = os.path.join(outdir, "timing.json")
    with open(path, "w") as fh:
        json.dump(
            {k: float(v) for k, v in seconds_by_stage.items()},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return path


def read_manifest(outdir):
    path = os.path.join(outdir, "manifest.json")
    if not os.path.exists(path):
        raise ValidationError(f"no manifest.json in {outdir}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != SCHEMA:
        raise ValidationError(
            f"unsupported manifest schema {manifest.get('schema')!r} in {path}"
        )
    return manifest


def write_thin_run(outdir, scenario, traj, dt):
    """Write a thin-solver run: per-snapshot CSVs plus diagnostics."""
    os.makedirs(outdir, exist_ok=True)
    grid = traj.grid
    th = np.repeat(grid.theta_nodes, grid.n_sigma)
    sg = np.tile(grid.sigma_nodes, grid.n_theta)
    outputs = []
    for k, st in enumerate(traj.states):
        name = f"snapshot_{k:03d}.csv"
        rows = [(_f(a), _f(b), _f(u)) for a, b, u in zip(th, sg, st.U)]
        _write_csv(os.path.join(outdir, name), ["theta0", "sigma", "u"], rows)
        outputs.append(name)
    _write_csv(
        os.path.join(outdir, "diagnostics.csv"),
        ["t", "mass", "energy", "picard_iterations", "source_total"],
        [
            (_f(t), _f(m), _f(e), str(int(c)), _f(s))
            for t, m, e, c, s in zip(
                traj.step_times, traj.mass, traj.energy, traj.picard_counts,
                traj.source_totals,
            )
        ],
    )
    outputs.append("diagnostics.csv")
    payload = {
        "scenario": scenario.to_dict(),
        "grid": {
            "n_theta": grid.n_theta,
            "n_sigma": grid.n_sigma,
            "eps": grid.eps,
            "quad_order": grid.quad_order,
        },
        "dt": dt,
        "times": [float(t) for t in traj.times],
        "diagnostics": {
            "mass_drift": float(np.max(np.abs(traj.mass - traj.mass[0])))
            if traj.mass.size
            else 0.0,
            "mass_identity_residual": traj.mass_identity_residual(),
            "max_picard_iterations": int(np.max(traj.picard_counts))
            if traj.picard_counts.size
            else 0,
        },
    }
    outputs.append("manifest.json")
    write_manifest(outdir, "thin", payload, outputs)
    return outdir


def read_thin_run(outdir):
    """Rebuild (scenario, dt, ThinTrajectory) from a thin run directory."""
    manifest = read_manifest(outdir)
    if manifest["kind"] != "thin":
        raise ValidationError(
            f"expected a thin-solver run in {outdir}, found kind {manifest['kind']!r}"
        )
    scenario = Scenario.from_dict(manifest["scenario"])
    g = manifest["grid"]
    grid = ThinGrid(
        n_theta=g["n_theta"], n_sigma=g["n_sigma"], eps=g["eps"],
        quad_order=g["quad_order"],
    )
    states = []
    for k, t in enumerate(manifest["times"]):
        path = os.path.join(outdir, f"snapshot_{k:03d}.csv")
        data = np.genfromtxt(path, delimiter=",", names=True)
        if data.dtype.names != ("theta0", "sigma", "u"):
            raise ValidationError(
                f"{path}: expected columns theta0,sigma,u, found {data.dtype.names}"
            )
        states.append(ThinState(t=float(t), U=np.asarray(data["u"], dtype=float)))
    traj = ThinTrajectory(
        grid=grid, times=np.asarray(manifest["times"], dtype=float), states=states
    )
    return scenario, manifest["dt"], traj


def write_surface_run(outdir, scenario, traj, dt):
    """Write a limit-solver run: v and zeta CSVs per snapshot."""
    os.makedirs(outdir, exist_ok=True)
    grid = traj.grid
    outputs = []
    for k, st in enumerate(traj.states):
        vname = f"v_{k:03d}.csv"
        _write_csv(
            os.path.join(outdir, vname),
            ["theta0", "v"],
            [(_f(a), _f(b)) for a, b in zip(grid.theta_nodes, st.v)],
        )
        zname = f"zeta_{k:03d}.csv"
        _write_csv(
            os.path.join(outdir, zname),
            ["theta0_quad", "zeta"],
            [(_f(a), _f(b)) for a, b in zip(grid.theta_quad, st.zeta)],
        )
        outputs.extend([vname, zname])
    _write_csv(
        os.path.join(outdir, "conserved.csv"),
        ["t", "conserved", "picard_iterations", "source_total"],
        [
            (_f(t), _f(c), str(int(n)), _f(s))
            for t, c, n, s in zip(
                traj.step_times, traj.conserved, traj.picard_counts,
                traj.source_totals,
            )
        ],
    )
    outputs.append("conserved.csv")
    payload = {
        "scenario": scenario.to_dict(),
        "grid": {"n_theta": grid.n_theta, "quad_order": grid.quad_order},
        "dt": dt,
        "times": [float(t) for t in traj.times],
        "diagnostics": {
            "conserved_drift": float(
                np.max(np.abs(traj.conserved - traj.conserved[0]))
            )
            if traj.conserved.size
            else 0.0,
            "mass_identity_residual": traj.mass_identity_residual(),
        },
    }
    outputs.append("manifest.json")
    write_manifest(outdir, "surface", payload, outputs)
    return outdir


def read_surface_run(outdir):
    """Rebuild (scenario, dt, SurfaceTrajectory) from a run directory."""
    manifest = read_manifest(outdir)
    if manifest["kind"] != "surface":
        raise ValidationError(
            f"expected a limit-solver run in {outdir}, found kind {manifest['kind']!r}"
        )
    scenario = Scenario.from_dict(manifest["scenario"])
    g = manifest["grid"]
    grid = SurfaceGrid(n_theta=g["n_theta"], quad_order=g["quad_order"])
    states = []
    for k, t in enumerate(manifest["times"]):
        vdata = np.genfromtxt(
            os.path.join(outdir, f"v_{k:03d}.csv"), delimiter=",", names=True
        )
        zdata = np.genfromtxt(
            os.path.join(outdir, f"zeta_{k:03d}.csv"), delimiter=",", names=True
        )
        states.append(
            SurfaceState(
                t=float(t),
                v=np.asarray(vdata["v"], dtype=float),
                zeta=np.asarray(zdata["zeta"], dtype=float),
            )
        )
    traj = SurfaceTrajectory(
        grid=grid, times=np.asarray(manifest["times"], dtype=float), states=states
    )
    return scenario, manifest["dt"], traj


def write_averaged_trace(outdir, scenario, trace):
    """Write an averaged trace as one long-format CSV."""
    os.makedirs(outdir, exist_ok=True)
    rows = []
    for k, t in enumerate(trace.times):
        for j, th in enumerate(trace.theta):
            rows.append(
                (
                    _f(t),
                    _f(th),
                    _f(trace.v[k, j]),
                    _f(trace.zeta[k, j]),
                    _f(trace.w[k, j, 0]),
                    _f(trace.w[k, j, 1]),
                    _f(trace.flux_diag[k, j]),
                )
            )
    _write_csv(
        os.path.join(outdir, "averaged.csv"),
        ["time", "theta0", "v_avg", "zeta_avg", "wx_avg", "wy_avg", "flux_diag"],
        rows,
    )
    payload = {
        "scenario": scenario.to_dict(),
        "eps": trace.eps,
        "n_theta": trace.n_theta,
        "n_sigma": trace.n_sigma,
        "times": [float(t) for t in trace.times],
    }
    write_manifest(outdir, "averaged", payload, ["averaged.csv", "manifest.json"])
    return outdir


def read_averaged_trace(outdir):
    """Rebuild (scenario, AveragedTrace) from an averaged run directory."""
    manifest = read_manifest(outdir)
    if manifest["kind"] != "averaged":
        raise ValidationError(
            f"expected an averaged trace in {outdir}, found kind {manifest['kind']!r}"
        )
    scenario = Scenario.from_dict(manifest["scenario"])
    data = np.genfromtxt(
        os.path.join(outdir, "averaged.csv"), delimiter=",", names=True
    )
    times = np.asarray(manifest["times"], dtype=float)
    n = manifest["n_theta"]
    nt = times.size

    def col(name):
        return np.asarray(data[name], dtype=float).reshape(nt, n)

    trace = AveragedTrace(
        times=times,
        theta=col("theta0")[0],
        v=col("v_avg"),
        zeta=col("zeta_avg"),
        w=np.stack([col("wx_avg"), col("wy_avg")], axis=-1),
        flux_diag=col("flux_diag"),
        eps=manifest["eps"],
        n_theta=n,
        n_sigma=manifest["n_sigma"],
    )
    return scenario, trace


def write_report(outdir, report):
    """Write a convergence report as JSON, per-eps CSV rows, and text."""
    os.makedirs(outdir, exist_ok=True)
    d = report.to_dict()
    # wall-clock data goes to timing.json so the report bytes are
    # reproducible across runs of the same configuration
    timing = {"limit_solve": d.pop("limit_runtime")}
    for e, r in zip(d["eps"], d.pop("runtimes")):
        timing[f"thin_solve_eps_{e:g}"] = r
    write_timing(outdir, timing)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump({"schema": SCHEMA, "kind": "report", **d}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")

    rows = []
    n = len(report.eps_values)
    for i in range(n):
        rows.append(
            (
                _f(report.eps_values[i]),
                _f(report.v_errors[i]),
                _f(report.zeta_errors[i]),
                _f(report.flux_errors[i]),
                _f(report.v_orders[i - 1]) if i > 0 else "",
                _f(report.thin_mass_drifts[i]),
                report.statuses[i],
            )
        )
    _write_csv(
        os.path.join(outdir, "report.csv"),
        ["eps", "v_error", "zeta_error", "flux_error", "v_order",
         "thin_mass_drift", "status"],
        rows,
    )

    lines = [
        f"convergence study: {report.scenario_name}",
        f"n_theta={report.n_theta} n_sigma={report.n_sigma} "
        f"dt={report.dt:g} t_end={report.t_end:g}",
        "",
        f"{'eps':>8} {'v_error':>12} {'zeta_err':>12} {'flux_err':>12} "
        f"{'order':>7} {'status':>8}",
    ]
    for i in range(n):
        order = f"{report.v_orders[i - 1]:7.3f}" if i > 0 else "      -"
        lines.append(
            f"{report.eps_values[i]:8.4f} {report.v_errors[i]:12.5e} "
            f"{report.zeta_errors[i]:12.5e} {report.flux_errors[i]:12.5e} "
            f"{order} {report.statuses[i]:>8}"
        )
    lines.append("")
    lines.append(f"limit mass identity residual: {report.limit_mass_drift:.3e}")
    with open(os.path.join(outdir, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")

    payload = {
        "scenario": d["scenario"],
        "eps": d["eps"],
        "n_theta": d["n_theta"],
        "n_sigma": d["n_sigma"],
        "dt": d["dt"],
        "t_end": d["t_end"],
    }
    write_manifest(
        outdir, "report", payload,
        ["report.json", "report.csv", "report.txt", "timing.json",
         "manifest.json"],
    )
    return outdir
