"""Figure rendering from solver output directories.

Each renderer reads only the documented CSV/JSON files of a run directory
(identified by its manifest.json) and never mutates them.  Four figure
kinds exist: convergence (log-log error ladder with fitted slope),
snapshot (solution on the curve per snapshot time), conservation
(drift of the conserved total over time), and zeta (averaged normal
derivative against the limit zeta).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

SCHEMA = "thinband/1"

KINDS = ("convergence", "snapshot", "conservation", "zeta")


class PlotError(Exception):
    pass


@dataclass
class FigureSpec:
    manifest: str
    kind: str
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(
                f"unknown figure kind {self.kind!r}; expected one of {KINDS}"
            )


def least_squares_slope(x, y):
    """Closed-form least-squares slope of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x - x.mean()
    return float(np.sum(xm * (y - y.mean())) / np.sum(xm * xm))


def _run_dir(manifest_path):
    if os.path.isdir(manifest_path):
        return manifest_path
    return os.path.dirname(os.path.abspath(manifest_path))


def load_manifest(manifest_path):
    path = manifest_path
    if os.path.isdir(path):
        path = os.path.join(path, "manifest.json")
    if not os.path.exists(path):
        raise PlotError(f"manifest not found: {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != SCHEMA:
        raise PlotError(
            f"unsupported schema {manifest.get('schema')!r} in {path}"
        )
    return manifest


def read_csv(path, columns):
    """Read a CSV, checking the header names one by one."""
    if not os.path.exists(path):
        raise PlotError(f"missing data file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for name in columns:
            if name not in header:
                raise PlotError(
                    f"{path}: expected column {name!r}, found {header}"
                )
        idx = [header.index(name) for name in columns]
        rows = [[float(row[i]) if row[i] != "" else np.nan for i in idx]
                for row in reader]
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(columns)}


def _require_kind(manifest, expected, manifest_path):
    if manifest.get("kind") != expected:
        raise PlotError(
            f"{manifest_path}: figure needs a {expected!r} run, "
            f"found kind {manifest.get('kind')!r}"
        )


def render_convergence(spec):
    manifest = load_manifest(spec.manifest)
    _require_kind(manifest, "report", spec.manifest)
    d = _run_dir(spec.manifest)
    with open(os.path.join(d, "report.json")) as fh:
        rep = json.load(fh)
    eps = np.asarray(rep.get("eps", []), dtype=float)
    if eps.size == 0:
        raise PlotError("report has an empty eps list; nothing to plot")
    series = {
        "field error": np.asarray(rep["v_errors"], dtype=float),
        "normal-derivative error": np.asarray(rep["zeta_errors"], dtype=float),
        "flux diagnostic": np.asarray(rep["flux_errors"], dtype=float),
    }
    slope = least_squares_slope(np.log(eps), np.log(series["field error"]))

    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for label, errs in series.items():
        ax.loglog(eps, errs, "o-", label=label)
    ax.set_xlabel("band width eps")
    ax.set_ylabel("space-time error")
    ax.invert_xaxis()
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title(f"{rep.get('scenario', '')}: observed slope {slope:.3f}")
    ax.annotate(f"slope = {slope:.6f}", xy=(0.05, 0.05),
                xycoords="axes fraction", fontsize=9)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)
    return {"slope": slope, "eps": eps.tolist()}


def render_snapshot(spec):
    manifest = load_manifest(spec.manifest)
    _require_kind(manifest, "surface", spec.manifest)
    d = _run_dir(spec.manifest)
    times = manifest["times"]
    fig, (ax0, ax1) = plt.subplots(
        1, 2, figsize=(9, 4.2),
        gridspec_kw={"width_ratios": [1, 1.3]},
    )
    vmin, vmax = np.inf, -np.inf
    last = None
    for k, t in enumerate(times):
        data = read_csv(os.path.join(d, f"v_{k:03d}.csv"), ["theta0", "v"])
        ax1.plot(data["theta0"], data["v"], label=f"t = {t:g}")
        vmin = min(vmin, float(np.min(data["v"])))
        vmax = max(vmax, float(np.max(data["v"])))
        last = data
    # reference-circle rendering colored by the final snapshot
    sc = ax0.scatter(np.cos(last["theta0"]), np.sin(last["theta0"]),
                     c=last["v"], cmap="viridis", s=18)
    ax0.set_aspect("equal")
    ax0.set_title(f"t = {times[-1]:g}")
    fig.colorbar(sc, ax=ax0, shrink=0.85)
    ax1.set_xlabel("theta0")
    ax1.set_ylabel("v")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)
    return {"vmin": vmin, "vmax": vmax, "times": list(times)}


def render_conservation(spec):
    manifest = load_manifest(spec.manifest)
    d = _run_dir(spec.manifest)
    kind = manifest.get("kind")
    if kind == "thin":
        data = read_csv(os.path.join(d, "diagnostics.csv"), ["t", "mass"])
        trace = data["mass"]
        label = "band total mass"
    elif kind == "surface":
        data = read_csv(os.path.join(d, "conserved.csv"), ["t", "conserved"])
        trace = data["conserved"]
        label = "weighted curve total"
    else:
        raise PlotError(
            f"{spec.manifest}: conservation figure needs a 'thin' or "
            f"'surface' run, found kind {kind!r}"
        )
    drift = trace - trace[0]
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.plot(data["t"], drift, lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel(f"{label} minus initial value")
    ax.ticklabel_format(axis="y", style="sci", scilimits=(-2, 2))
    ax.grid(alpha=0.3)
    ax.set_title(f"max |drift| = {np.max(np.abs(drift)):.2e}")
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)
    return {"max_drift": float(np.max(np.abs(drift)))}


def render_zeta(spec):
    manifest = load_manifest(spec.manifest)
    _require_kind(manifest, "averaged", spec.manifest)
    d = _run_dir(spec.manifest)
    data = read_csv(
        os.path.join(d, "averaged.csv"),
        ["time", "theta0", "zeta_avg"],
    )
    times = np.asarray(manifest["times"], dtype=float)
    n = manifest["n_theta"]
    theta = data["theta0"][:n]
    zeta = data["zeta_avg"].reshape(times.size, n)

    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    k = times.size - 1
    ax.plot(theta, zeta[k], "o-", ms=3,
            label=f"band average, eps = {manifest['eps']:g}")
    limit_dir = spec.options.get("limit")
    if limit_dir is not None:
        lm = load_manifest(limit_dir)
        _require_kind(lm, "surface", limit_dir)
        ltimes = np.asarray(lm["times"], dtype=float)
        j = int(np.argmin(np.abs(ltimes - times[k])))
        zd = read_csv(
            os.path.join(_run_dir(limit_dir), f"zeta_{j:03d}.csv"),
            ["theta0_quad", "zeta"],
        )
        ax.plot(zd["theta0_quad"], zd["zeta"], "-", lw=1.0,
                label=f"limit, t = {ltimes[j]:g}")
    ax.set_xlabel("theta0")
    ax.set_ylabel("zeta")
    ax.set_title(f"t = {times[k]:g}")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=150)
    plt.close(fig)
    return {"t": float(times[k]), "n_theta": n}


_RENDERERS = {
    "convergence": render_convergence,
    "snapshot": render_snapshot,
    "conservation": render_conservation,
    "zeta": render_zeta,
}


def render(spec):
    """Render one figure; returns a small dict of extracted values."""
    return _RENDERERS[spec.kind](spec)
