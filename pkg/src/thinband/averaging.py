"""Weighted thin-direction averages, data lifting, and paired error norms.

All averages are taken in reference coordinates, where the substitution
r = eps*(g0 + sigma*g) turns the band-normal integral into

    avg(phi)(theta) = int_0^1 phi(theta, sigma) J(theta, r(sigma)) dsigma,

with no 1/(eps*g) factor left over.  The constant extension of a curve
function is literally sigma-independence, and the lifted initial datum
v0 / J averages back to v0 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry, surface

# 4-point Gauss on [0, 1]: exact for the low-degree sigma-polynomials that
# appear (J is affine in sigma, the interpolant linear)
_GX, _GW = np.polynomial.legendre.leggauss(4)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW

_G2X, _G2W = np.polynomial.legendre.leggauss(2)
_G2X = 0.5 * (_G2X + 1.0)
_G2W = 0.5 * _G2W


@dataclass
class AveragedTrace:
    """Per-time curve functions averaged out of a thin trajectory."""

    times: np.ndarray
    theta: np.ndarray
    v: np.ndarray  # (nt, n)
    zeta: np.ndarray  # (nt, n)
    w: np.ndarray  # (nt, n, 2)
    flux_diag: np.ndarray  # (nt, n)
    eps: float
    n_theta: int
    n_sigma: int


def _columns_at(grid, U, theta):
    """Sigma-columns of the bilinear interpolant at arbitrary theta values."""
    U2 = np.asarray(U).reshape(grid.n_theta, grid.n_sigma)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = (theta % (2 * np.pi)) / grid.dtheta
    j = np.minimum(x.astype(int), grid.n_theta - 1)
    s = x - j
    jp = (j + 1) % grid.n_theta
    return (1.0 - s)[:, None] * U2[j] + s[:, None] * U2[jp]  # (nth, n_sigma)


def _sigma_quad(grid):
    """Composite 4-point Gauss layout over the grid's sigma cells."""
    cells = np.arange(grid.n_sigma - 1)
    sq = (cells[:, None] + _GX[None, :]) * grid.dsigma  # (ncell, 4)
    wq = np.broadcast_to(_GW[None, :] * grid.dsigma, sq.shape)
    return sq.ravel(), wq.ravel()


def _jacobian_at(scenario, eps, theta, sigma_q, t):
    """J and the band geometry shared by all the averages below."""
    fr = geometry.frame(scenario, theta, t)
    g0 = scenario.g0(theta, t)
    g = scenario.g(theta, t)
    r = eps * (g0[:, None] + sigma_q[None, :] * g[:, None])
    J = 1.0 - r * fr.H[:, None]
    if np.any(J <= 0.0):
        raise geometry.GeometryError(
            f"band self-intersection while averaging: J reaches {np.min(J):.3e}"
        )
    return fr, g, J


def weighted_average(scenario, grid, U, t, theta=None):
    """Thin-direction weighted average of a nodal thin field.

    Returns the average at `theta` (default: the grid's theta nodes).
    """
    if theta is None:
        theta = grid.theta_nodes
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cols = _columns_at(grid, U, theta)  # (nth, n_sigma)
    sq, wq = _sigma_quad(grid)
    _, _, J = _jacobian_at(scenario, grid.eps, theta, sq, t)
    # interpolate the columns linearly within each sigma cell
    ic = np.minimum((sq / grid.dsigma).astype(int), grid.n_sigma - 2)
    loc = sq / grid.dsigma - ic
    vals = (1.0 - loc)[None, :] * cols[:, ic] + loc[None, :] * cols[:, ic + 1]
    return np.einsum("nq,nq,q->n", vals, J, wq)


def weighted_average_fn(fn, scenario, eps, theta, t, n_cells=8):
    """Weighted average of a callable phi(theta, sigma) on the band."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cells = np.arange(n_cells)
    sq = ((cells[:, None] + _GX[None, :]) / n_cells).ravel()
    wq = np.broadcast_to(_GW[None, :] / n_cells, (n_cells, _GX.size)).ravel()
    _, _, J = _jacobian_at(scenario, eps, theta, sq, t)
    vals = fn(theta[:, None], sq[None, :])
    return np.einsum("nq,nq,q->n", vals, J, wq)


def normal_avg(scenario, grid, U, t, theta=None):
    """Weighted average of the band-normal derivative of a nodal thin field."""
    if theta is None:
        theta = grid.theta_nodes
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    cols = _columns_at(grid, U, theta)
    sq, wq = _sigma_quad(grid)
    _, g, J = _jacobian_at(scenario, grid.eps, theta, sq, t)
    # normal derivative: d(u)/dnu = dU/dsigma / (eps*g); dU/dsigma is
    # piecewise constant over the sigma cells
    dcols = np.diff(cols, axis=1) / grid.dsigma  # (nth, n_sigma-1)
    ic = np.minimum((sq / grid.dsigma).astype(int), grid.n_sigma - 2)
    vals = dcols[:, ic] / (grid.eps * g[:, None])
    return np.einsum("nq,nq,q->n", vals, J, wq)


def flux_average(scenario, grid, U, t):
    """Average of the nonlinear flux, and the normal-flux diagnostic.

    Returns (w, diag) at the grid's theta nodes, where w is the weighted
    average of |grad u|^(p-2) grad u and diag = w . nu + V * avg(u).
    """
    theta = grid.theta_nodes
    U2 = np.asarray(U).reshape(grid.n_theta, grid.n_sigma)
    sq, wq = _sigma_quad(grid)
    fr, g, J = _jacobian_at(scenario, grid.eps, theta, sq, t)

    # reference gradient at (theta_j, sigma_q): centered difference in theta,
    # exact cell derivative in sigma
    dUdth = (np.roll(U2, -1, axis=0) - np.roll(U2, 1, axis=0)) / (2.0 * grid.dtheta)
    dUdsg = np.diff(U2, axis=1) / grid.dsigma
    ic = np.minimum((sq / grid.dsigma).astype(int), grid.n_sigma - 2)
    loc = sq / grid.dsigma - ic
    gth = (1.0 - loc)[None, :] * dUdth[:, ic] + loc[None, :] * dUdth[:, ic + 1]
    gsg = dUdsg[:, ic]

    tm = geometry.thin_map(scenario, grid.eps, theta[:, None], sq[None, :], t)
    dpsi_invT = geometry.inv_transpose_2x2(tm.dpsi)
    grad_ref = np.stack([gth, gsg], axis=-1)
    grad = np.einsum("nqab,nqb->nqa", dpsi_invT, grad_ref)

    p = scenario.p
    mag2 = np.sum(grad**2, axis=-1)
    coeff = np.ones_like(mag2) if p == 2.0 else mag2 ** ((p - 2.0) / 2.0)
    flux = coeff[..., None] * grad
    w = np.einsum("nqa,nq,q->na", flux, J, wq)
    avg_u = weighted_average(scenario, grid, U, t)
    diag = np.sum(w * fr.nu, axis=-1) + fr.VGamma * avg_u
    return w, diag


def lift_initial(scenario, eps):
    """Thin initial datum v0/J whose weighted average is exactly v0."""

    def u0(theta, sigma):
        theta = np.asarray(theta, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        fr = geometry.frame(scenario, theta, 0.0)
        g0 = scenario.g0(theta, 0.0)
        g = scenario.g(theta, 0.0)
        r = eps * (g0 + sigma * g)
        J = geometry.jacobian(fr, r)
        return scenario.v0(theta) / J

    return u0


def lift_source(scenario):
    """Constant extension of the limit source into the band."""

    def fbar(theta, sigma, t):
        vals = scenario.f_limit(theta, t)
        return np.broadcast_to(vals, np.broadcast(
            np.asarray(theta, dtype=float), np.asarray(sigma, dtype=float)
        ).shape).copy()

    return fbar


def pairing_terms(scenario, grid, U, eta, t):
    """Both sides of the band/curve pairing identity for nodal data.

    Returns (band integral of U * eta_extended, eps * curve integral of
    g * avg(U) * eta); the two agree to quadrature tolerance.
    """
    eta = np.asarray(eta, dtype=float)
    theta_q = ((np.arange(grid.n_theta)[:, None] + _G2X[None, :]) * grid.dtheta).ravel()
    wth = np.broadcast_to(_G2W[None, :] * grid.dtheta,
                          (grid.n_theta, _G2X.size)).ravel()

    # curve-side quantities at the theta quadrature points
    fr = geometry.frame(scenario, theta_q, t)
    g = scenario.g(theta_q, t)
    avg_q = weighted_average(scenario, grid, U, t, theta=theta_q)
    j = np.arange(grid.n_theta).repeat(_G2X.size)
    loc = np.tile(_G2X, grid.n_theta)
    eta_q = (1.0 - loc) * eta[j] + loc * eta[(j + 1) % grid.n_theta]
    rhs = grid.eps * np.sum(wth * g * avg_q * eta_q * fr.arclen)

    # band side: same theta rule, sigma cells with 4-point Gauss
    sq, wsg = _sigma_quad(grid)
    cols = _columns_at(grid, U, theta_q)
    ic = np.minimum((sq / grid.dsigma).astype(int), grid.n_sigma - 2)
    locs = sq / grid.dsigma - ic
    vals = (1.0 - locs)[None, :] * cols[:, ic] + locs[None, :] * cols[:, ic + 1]
    tm = geometry.thin_map(scenario, grid.eps, theta_q[:, None], sq[None, :], t)
    lhs = np.einsum("nq,n,nq,q,n->", vals, eta_q, tm.det, wsg, wth)
    return float(lhs), float(rhs)


def average_trajectory(scenario, traj):
    """Apply all three averages to every snapshot of a thin trajectory."""
    grid = traj.grid
    n = grid.n_theta
    nt = len(traj.states)
    v = np.zeros((nt, n))
    zeta = np.zeros((nt, n))
    w = np.zeros((nt, n, 2))
    diag = np.zeros((nt, n))
    for k, st in enumerate(traj.states):
        v[k] = weighted_average(scenario, grid, st.U, st.t)
        zeta[k] = normal_avg(scenario, grid, st.U, st.t)
        w[k], diag[k] = flux_average(scenario, grid, st.U, st.t)
    return AveragedTrace(
        times=np.asarray(traj.times, dtype=float),
        theta=grid.theta_nodes,
        v=v,
        zeta=zeta,
        w=w,
        flux_diag=diag,
        eps=grid.eps,
        n_theta=grid.n_theta,
        n_sigma=grid.n_sigma,
    )


def _curve_l2(scenario, grid, values, t):
    """Weighted L2 norm on the curve (weight g, arclength measure)."""
    sl = surface._CurveSlice(scenario, grid, t)
    return float(values @ (sl.M @ values))


def error_norms(scenario, trace, surf_traj):
    """Space-time error norms between an averaged trace and a limit solve.

    Uses the limit problem's g-weighted arclength norm in space and the
    composite trapezoid rule in time; snapshot times must coincide.

    The algebraic relation between the flux and the normal velocity holds
    instantaneously in the limit but is only reached by the band solution
    after an initial relaxation layer, so the zeta and flux-diagnostic
    norms skip the t = 0 snapshot; the field error keeps it.
    """
    if len(trace.times) != len(surf_traj.times) or np.max(
        np.abs(np.asarray(trace.times) - np.asarray(surf_traj.times))
    ) > 1e-12 * max(1.0, float(np.max(trace.times, initial=0.0))):
        raise ValueError("averaged trace and limit trajectory snapshots are misaligned")
    grid = surf_traj.grid
    if grid.n_theta != trace.n_theta:
        raise ValueError("averaged trace and limit trajectory use different theta grids")

    times = np.asarray(trace.times, dtype=float)
    ev2 = np.zeros(times.size)
    ez2 = np.zeros(times.size)
    ew2 = np.zeros(times.size)
    for k, (t, st) in enumerate(zip(times, surf_traj.states)):
        zl = surface.zeta_nodal(scenario, grid, st)
        ev2[k] = _curve_l2(scenario, grid, trace.v[k] - st.v, t)
        ez2[k] = _curve_l2(scenario, grid, trace.zeta[k] - zl, t)
        ew2[k] = _curve_l2(scenario, grid, trace.flux_diag[k], t)
    skip = 1 if times.size > 2 and times[0] == 0.0 else 0
    return {
        "v_l2": float(np.sqrt(np.trapezoid(ev2, times))),
        "zeta_l2": float(np.sqrt(np.trapezoid(ez2[skip:], times[skip:]))),
        "flux_diag_l2": float(np.sqrt(np.trapezoid(ew2[skip:], times[skip:]))),
        "v_sup": float(np.sqrt(np.max(ev2))),
        "zeta_sup": float(np.sqrt(np.max(ez2[skip:]))),
    }
