"""Verification experiments: independent oracles and epsilon-convergence.

Three kinds of evidence are produced here.  A one-dimensional moving-interval
finite-volume oracle solves the radially symmetric band problem with a
discretization unrelated to the bilinear solver, so agreement is meaningful.
Exact-solution suites exercise closed-form solutions of the curve system.
The convergence study runs the band solver over a ladder of band widths and
measures the distance of the averaged band solution to the curve solution.
"""

from __future__ import annotations

import concurrent.futures
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import averaging, geometry, surface, thin
from .errors import ScenarioError, SolverError
from .scenario import Scenario, builtin_scenario

_DRIFT_TOL = 1e-8


def _radial_data(scenario, eps, t):
    """Inner/outer band radii and their velocities for a circular scenario."""
    th0 = np.array([0.0])
    fr = geometry.frame(scenario, th0, t)
    R = float(np.sqrt(np.sum(fr.y**2)))
    Rdot = float(fr.VGamma[0])
    g0 = float(scenario.g0(th0, t)[0])
    g1 = float(scenario.g1(th0, t)[0])
    rho0 = R + eps * g0
    rho1 = R + eps * g1
    d0 = Rdot + eps * float(fr.dgdt0[0])
    d1 = Rdot + eps * float(fr.dgdt1[0])
    return rho0, rho1, d0, d1


def _check_radial_symmetry(scenario, eps):
    """Refuse scenarios whose geometry or data depend on the curve parameter."""
    if scenario.curve_family not in ("circle", "expanding_circle"):
        raise ScenarioError(
            f"radial oracle needs a circular curve, got {scenario.curve_family!r}"
        )
    theta = np.linspace(0.0, 2 * np.pi, 17, endpoint=False)
    for t in np.linspace(0.0, scenario.T, 5):
        for name, vals in (
            ("g0", scenario.g0(theta, t)),
            ("g1", scenario.g1(theta, t)),
            ("f", scenario.f_thin(theta, 0.3 * np.ones_like(theta), t)),
        ):
            if np.max(np.abs(vals - vals[0])) > 1e-12:
                raise ScenarioError(
                    f"radial oracle needs angle-independent data, {name} varies"
                )
    fvals = scenario.f_thin(theta, 0.3 * np.ones_like(theta), 0.0)
    if np.max(np.abs(fvals)) > 0.0:
        raise ScenarioError("radial oracle supports source-free problems only")


def radial_oracle(scenario, eps, u0_of_rho, n_cells, dt, t_end=None):
    """Finite-volume solution of the radially symmetric band problem.

    The band is the annulus rho0(t) < rho < rho1(t); cells move affinely with
    the faces.  Implicit Euler on the conservative form with zero total flux
    through each face reproduces the no-flux condition of the band problem
    exactly, so the discrete mass sum(V_i u_i) is constant.

    Returns a dict with cell centers, cell values, times and the mass trace.
    """
    _check_radial_symmetry(scenario, eps)
    t_end = scenario.T if t_end is None else t_end
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError(f"t_end {t_end} is not an integer multiple of dt {dt}")
    p = scenario.p
    xi_edges = np.linspace(0.0, 1.0, n_cells + 1)

    def edges(t):
        rho0, rho1, d0, d1 = _radial_data(scenario, eps, t)
        rho = rho0 + xi_edges * (rho1 - rho0)
        xdot = d0 + xi_edges * (d1 - d0)
        return rho, xdot

    rho, _ = edges(0.0)
    centers = 0.5 * (rho[:-1] + rho[1:])
    vol = 0.5 * (rho[1:] ** 2 - rho[:-1] ** 2)
    u = np.asarray(u0_of_rho(centers), dtype=float)
    masses = np.zeros(n_steps + 1)
    masses[0] = float(np.sum(vol * u))

    for k in range(1, n_steps + 1):
        rho_new, xdot_new = edges(k * dt)
        c_new = 0.5 * (rho_new[:-1] + rho_new[1:])
        v_new = 0.5 * (rho_new[1:] ** 2 - rho_new[:-1] ** 2)
        delta = c_new[1:] - c_new[:-1]
        re = rho_new[1:-1]
        xe = xdot_new[1:-1]
        rhs = vol * u
        ca = 0.5 * re * xe

        u_it = u
        for it in range(thin.PICARD_MAXIT):
            grad = (u_it[1:] - u_it[:-1]) / delta
            if p == 2.0:
                w = np.ones_like(grad)
            else:
                w = np.abs(grad) ** (p - 2.0)
            cg = re * w / delta
            # interior edge e sits between cells e and e+1; the flux enters
            # row e with minus sign (outflow) and row e+1 with plus sign
            ab = np.zeros((3, n_cells))
            ab[1] = v_new
            ab[1, :-1] += dt * (cg - ca)
            ab[1, 1:] += dt * (cg + ca)
            ab[0, 1:] = -dt * (cg + ca)  # superdiagonal
            ab[2, :-1] = dt * (-cg + ca)  # subdiagonal
            u_next = solve_banded((1, 1), ab, rhs)
            if it >= thin.PICARD_DAMP_AFTER:
                u_next = thin.PICARD_DAMPING * u_next + (1.0 - thin.PICARD_DAMPING) * u_it
            update = np.linalg.norm(u_next - u_it) / max(np.linalg.norm(u_next), 1e-30)
            u_it = u_next
            if update < thin.PICARD_TOL:
                break
        else:
            raise SolverError(
                f"radial oracle: Picard iteration stalled at t={k * dt:.6f}",
                [update],
            )
        u = u_it
        vol = v_new
        masses[k] = float(np.sum(vol * u))

    return {
        "centers": centers if n_steps == 0 else 0.5 * (rho_new[:-1] + rho_new[1:]),
        "u": u,
        "t": t_end,
        "mass": masses,
        "step_times": np.arange(n_steps + 1) * dt,
    }


def radial_comparison(scenario, eps, u0_of_rho, n_sigma, dt, n_theta=16,
                      t_end=None, oracle_cells=4000, oracle_dt=None):
    """Relative L2 distance between band solver and radial oracle at t_end.

    The band solver runs on its own bilinear grid with the radial profile as
    initial data; the oracle runs on a much finer independent grid.  The
    comparison is taken along one radial fiber in the weighted norm with
    measure rho drho.
    """
    t_end = scenario.T if t_end is None else t_end
    oracle_dt = dt / 4.0 if oracle_dt is None else oracle_dt
    grid = thin.ThinGrid(n_theta=n_theta, n_sigma=n_sigma, eps=eps)
    th, sg = np.meshgrid(grid.theta_nodes, grid.sigma_nodes, indexing="ij")
    tm0 = geometry.thin_map(scenario, eps, th, sg, 0.0)
    rho_nodes0 = np.sqrt(np.sum(tm0.position**2, axis=-1))
    U0 = u0_of_rho(rho_nodes0).reshape(grid.n_dof)
    traj = thin.solve(scenario, grid, dt, snapshot_times=[0.0, t_end],
                      t_end=t_end, U0=U0)
    oracle = radial_oracle(scenario, eps, u0_of_rho, oracle_cells, oracle_dt,
                           t_end=t_end)

    U = traj.states[-1].U.reshape(grid.n_theta, grid.n_sigma)
    tm = geometry.thin_map(scenario, eps, th, sg, t_end)
    rho = np.sqrt(np.sum(tm.position[0]**2, axis=-1))
    u_band = U[0]
    u_ref = np.interp(rho, oracle["centers"], oracle["u"])
    num = np.trapezoid((u_band - u_ref) ** 2 * rho, rho)
    den = np.trapezoid(u_ref**2 * rho, rho)
    return float(np.sqrt(num / den)), traj, oracle


@dataclass
class ConvergenceReport:
    """Outcome of one epsilon ladder: errors, orders and diagnostics."""

    scenario_name: str
    eps_values: list
    n_theta: int
    n_sigma: int
    dt: float
    t_end: float
    snapshot_times: list
    v_errors: list
    zeta_errors: list
    flux_errors: list
    v_sup_errors: list
    v_orders: list
    zeta_orders: list
    thin_mass_drifts: list
    limit_mass_drift: float
    runtimes: list
    limit_runtime: float
    statuses: list = field(default_factory=list)

    def to_dict(self):
        return {
            "scenario": self.scenario_name,
            "eps": list(self.eps_values),
            "n_theta": self.n_theta,
            "n_sigma": self.n_sigma,
            "dt": self.dt,
            "t_end": self.t_end,
            "snapshot_times": list(self.snapshot_times),
            "v_errors": list(self.v_errors),
            "zeta_errors": list(self.zeta_errors),
            "flux_errors": list(self.flux_errors),
            "v_sup_errors": list(self.v_sup_errors),
            "v_orders": list(self.v_orders),
            "zeta_orders": list(self.zeta_orders),
            "thin_mass_drifts": list(self.thin_mass_drifts),
            "limit_mass_drift": self.limit_mass_drift,
            "runtimes": list(self.runtimes),
            "limit_runtime": self.limit_runtime,
            "statuses": list(self.statuses),
        }


def _run_one_eps(scenario_dict, eps, params):
    """Worker: solve the band problem at one eps and average the trajectory.

    Takes the scenario as a plain dict so the call is picklable for process
    pools; returns only arrays and floats.
    """
    scenario = Scenario.from_dict(scenario_dict)
    grid = thin.ThinGrid(
        n_theta=params["n_theta"], n_sigma=params["n_sigma"], eps=eps
    )
    start = time.perf_counter()
    traj = thin.solve(
        scenario,
        grid,
        params["dt"],
        snapshot_times=params["snapshot_times"],
        t_end=params["t_end"],
        initial="lifted",
    )
    runtime = time.perf_counter() - start
    trace = averaging.average_trajectory(scenario, traj)
    drift = traj.mass_identity_residual() / max(1.0, abs(traj.mass[0]))
    return trace, drift, runtime


def convergence_study(scenario, eps_values, n_theta=64, n_sigma=16, dt=1e-3,
                      t_end=None, n_snapshots=6, workers=None):
    """Run the band solver over a ladder of eps and compare to the limit.

    The limit system is solved once on the same curve grid; every band run
    reuses the same snapshot times so the error norms integrate the same
    time window.  eps_values must be strictly decreasing.
    """
    eps_values = [float(e) for e in eps_values]
    if len(eps_values) < 2:
        raise ValueError("need at least two eps values")
    if any(e2 >= e1 for e1, e2 in zip(eps_values, eps_values[1:])):
        raise ValueError("eps values must be strictly decreasing")
    t_end = scenario.T if t_end is None else t_end
    snapshot_times = list(np.linspace(0.0, t_end, n_snapshots))

    sgrid = surface.SurfaceGrid(n_theta=n_theta)
    start = time.perf_counter()
    surf_traj = surface.solve(scenario, sgrid, dt, snapshot_times=snapshot_times,
                              t_end=t_end)
    limit_runtime = time.perf_counter() - start
    limit_drift = surf_traj.mass_identity_residual() / max(
        1.0, abs(surf_traj.conserved[0])
    )

    params = {
        "n_theta": n_theta,
        "n_sigma": n_sigma,
        "dt": dt,
        "t_end": t_end,
        "snapshot_times": snapshot_times,
    }
    sdict = scenario.to_dict()
    if workers is not None and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(_run_one_eps, [sdict] * len(eps_values), eps_values,
                         [params] * len(eps_values))
            )
    else:
        results = [_run_one_eps(sdict, e, params) for e in eps_values]

    v_errors, zeta_errors, flux_errors, v_sups = [], [], [], []
    drifts, runtimes, statuses = [], [], []
    for eps, (trace, drift, runtime) in zip(eps_values, results):
        norms = averaging.error_norms(scenario, trace, surf_traj)
        v_errors.append(norms["v_l2"])
        zeta_errors.append(norms["zeta_l2"])
        flux_errors.append(norms["flux_diag_l2"])
        v_sups.append(norms["v_sup"])
        drifts.append(drift)
        runtimes.append(runtime)
        status = "ok"
        if not np.isfinite(norms["v_l2"]):
            status = "FAILED: non-finite error"
        elif drift > _DRIFT_TOL:
            status = f"FAILED: mass drift {drift:.3e} exceeds {_DRIFT_TOL:g}"
        statuses.append(status)

    def orders(errs):
        out = []
        for (e1, x1), (e2, x2) in zip(
            zip(eps_values, errs), zip(eps_values[1:], errs[1:])
        ):
            if x1 > 0 and x2 > 0:
                out.append(float(np.log(x1 / x2) / np.log(e1 / e2)))
            else:
                out.append(float("nan"))
        return out

    return ConvergenceReport(
        scenario_name=scenario.name,
        eps_values=eps_values,
        n_theta=n_theta,
        n_sigma=n_sigma,
        dt=dt,
        t_end=t_end,
        snapshot_times=snapshot_times,
        v_errors=v_errors,
        zeta_errors=zeta_errors,
        flux_errors=flux_errors,
        v_sup_errors=v_sups,
        v_orders=orders(v_errors),
        zeta_orders=orders(zeta_errors),
        thin_mass_drifts=drifts,
        limit_mass_drift=limit_drift,
        runtimes=runtimes,
        limit_runtime=limit_runtime,
        statuses=statuses,
    )


def exact_suites():
    """Closed-form checks of the curve solver; returns pass/fail rows."""
    rows = []

    scen = builtin_scenario("expanding_circle")
    grid = surface.SurfaceGrid(n_theta=64)
    traj = surface.solve(scen, grid, 1e-3, t_end=1.0)
    v = traj.states[-1].v
    v_exact = 3.0 / (1.0 + 0.5 * 1.0)
    rows.append(
        _row("expanding_circle_v", float(np.max(np.abs(v - v_exact))), 1e-3)
    )
    zeta = surface.zeta_nodal(scen, grid, traj.states[-1])
    rows.append(
        _row("expanding_circle_zeta", float(np.max(np.abs(zeta + 1.0))), 1e-3)
    )
    drift = float(np.max(np.abs(traj.conserved - 6.0 * np.pi)))
    rows.append(_row("expanding_circle_conserved", drift, 1e-10))

    heat = Scenario.from_dict(
        {
            "name": "heat_decay",
            "p": 2.0,
            "T": 0.5,
            "curve": {"family": "circle", "params": {"radius": 1.0}},
            "g0": "0",
            "g1": "1",
            "f": "0",
            "v0": "cos(theta0)",
        }
    )
    hgrid = surface.SurfaceGrid(n_theta=128)
    htraj = surface.solve(heat, hgrid, 5e-4, t_end=0.5)
    vh = htraj.states[-1].v
    v_exact = np.exp(-0.5) * np.cos(hgrid.theta_nodes)
    sl = surface._CurveSlice(heat, hgrid, 0.5)
    diff = vh - v_exact
    err = float(np.sqrt(diff @ (sl.M @ diff)))
    rows.append(_row("heat_decay_p2_l2", err, 2e-2))
    return rows


def _row(name, measured, tolerance):
    return {
        "name": name,
        "measured": measured,
        "tolerance": tolerance,
        "passed": bool(measured <= tolerance),
    }
