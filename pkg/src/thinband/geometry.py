"""Pointwise geometry of the moving curve and the thin band around it.

Everything is evaluated in material coordinates: theta0 parametrizes the
curve, sigma in [0, 1] parametrizes the thin direction between the two band
faces, and time derivatives at fixed (theta0, sigma) are material
derivatives.  All functions are vectorized over theta0/sigma and stateless.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError

_DEGENERATE_TOL = 1e-12


def _cross2(a, b):
    """Scalar cross product of 2-vectors stored along the last axis."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _rot_minus90(v):
    """Rotate 2-vectors by -90 degrees: (x, y) -> (y, -x)."""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


@dataclass
class GeoFrame:
    """All pointwise geometric quantities of the curve at one time.

    Fields are arrays broadcast over the theta0 samples; vector fields carry
    a trailing axis of length 2.  The sign convention is counterclockwise
    curve, outward normal nu = rotate(tau, -90deg), and mean curvature
    H = -1/R on a circle of radius R.
    """

    y: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    H: np.ndarray
    arclen: np.ndarray
    vGamma: np.ndarray
    VGamma: np.ndarray
    vTau: np.ndarray
    divGamma_v: np.ndarray
    dgdt0: np.ndarray
    dgdt1: np.ndarray


def frame(scenario, theta, t):
    """Evaluate the full geometric frame of the curve at (theta, t)."""
    theta = np.asarray(theta, dtype=float)
    y = scenario.pos(theta, t)
    yth = scenario.pos_th(theta, t)
    ythth = scenario.pos_thth(theta, t)
    yt = scenario.pos_t(theta, t)
    ytht = scenario.pos_tht(theta, t)

    arclen = np.sqrt(np.sum(yth**2, axis=-1))
    if np.any(arclen < _DEGENERATE_TOL):
        j = int(np.argmin(np.atleast_1d(arclen)))
        th_bad = np.atleast_1d(theta)[j] if theta.ndim else float(theta)
        raise GeometryError(
            f"degenerate curve: |dy/dtheta| < {_DEGENERATE_TOL:g} "
            f"at theta0={th_bad:.8f}, t={t:.8f}"
        )

    tau = yth / arclen[..., None]
    nu = _rot_minus90(tau)
    H = -_cross2(yth, ythth) / arclen**3
    VGamma = np.sum(yt * nu, axis=-1)
    vTau = np.sum(yt * tau, axis=-1)
    divGamma_v = np.sum(tau * ytht, axis=-1) / arclen
    return GeoFrame(
        y=y,
        tau=tau,
        nu=nu,
        H=H,
        arclen=arclen,
        vGamma=yt,
        VGamma=VGamma,
        vTau=vTau,
        divGamma_v=divGamma_v,
        dgdt0=scenario.dg0_dt(theta, t),
        dgdt1=scenario.dg1_dt(theta, t),
    )


def jacobian(fr, r):
    """Band Jacobian J = 1 - r*H converting band to curve-normal integrals."""
    J = 1.0 - np.asarray(r, dtype=float) * fr.H
    if np.any(J <= 0.0):
        raise GeometryError(
            f"band self-intersection: J = 1 - r*H reaches {np.min(J):.3e} <= 0"
        )
    return J


@dataclass
class ThinMap:
    """Reference-to-band map at fixed time: position, differential, metric."""

    position: np.ndarray  # (..., 2)
    dpsi: np.ndarray  # (..., 2, 2), columns d/dtheta and d/dsigma
    det: np.ndarray  # (...,)
    ginv: np.ndarray  # (..., 2, 2), inverse of dpsi^T dpsi


def thin_map(scenario, eps, theta, sigma, t):
    """Map reference coordinates (theta, sigma) into the band at time t.

    The band point is y + r*nu with r = eps*(g0 + sigma*(g1 - g0)); sigma
    interpolates linearly between the two faces.
    """
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    fr = frame(scenario, theta, t)
    g0 = scenario.g0(theta, t)
    g1 = scenario.g1(theta, t)
    g = g1 - g0
    r = eps * (g0 + sigma * g)
    r_th = eps * (
        scenario.dg0_dth(theta, t)
        + sigma * (scenario.dg1_dth(theta, t) - scenario.dg0_dth(theta, t))
    )

    one_m_rH = 1.0 - r * fr.H
    position = fr.y + r[..., None] * fr.nu
    # d(psi)/dtheta = (1 - r H) y_theta + r_theta nu   (uses d(nu)/dtheta = -H y_theta)
    col_th = one_m_rH[..., None] * (fr.tau * fr.arclen[..., None]) + r_th[..., None] * fr.nu
    col_sg = (eps * g)[..., None] * fr.nu
    shape = np.broadcast_shapes(theta.shape, sigma.shape) + (2,)
    dpsi = np.stack(
        [np.broadcast_to(col_th, shape), np.broadcast_to(col_sg, shape)], axis=-1
    )

    det = one_m_rH * fr.arclen * eps * g
    if np.any(det <= 0.0):
        raise GeometryError(
            f"band self-intersection: det(Dpsi) reaches {np.min(det):.3e} <= 0"
        )

    # metric G = Dpsi^T Dpsi in the orthogonal (tau, nu) decomposition
    g_tt = (one_m_rH * fr.arclen) ** 2 + r_th**2
    g_ts = r_th * eps * g
    g_ss = (eps * g) ** 2
    inv_det = 1.0 / (g_tt * g_ss - g_ts**2)
    ginv = np.empty(np.broadcast(theta, sigma).shape + (2, 2))
    ginv[..., 0, 0] = g_ss * inv_det
    ginv[..., 0, 1] = -g_ts * inv_det
    ginv[..., 1, 0] = -g_ts * inv_det
    ginv[..., 1, 1] = g_tt * inv_det
    return ThinMap(position=position, dpsi=dpsi, det=det, ginv=ginv)


def material_velocity(scenario, eps, theta, sigma, t):
    """Time derivative of the thin map at fixed (theta, sigma)."""
    theta = np.asarray(theta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    fr = frame(scenario, theta, t)
    g0 = scenario.g0(theta, t)
    g = scenario.g1(theta, t) - g0
    r = eps * (g0 + sigma * g)
    r_t = eps * (fr.dgdt0 + sigma * (fr.dgdt1 - fr.dgdt0))
    # d(nu)/dt = -(nu . y_{t,theta} / |y_theta|) tau
    ytht = scenario.pos_tht(theta, t)
    nu_dot = -(np.sum(fr.nu * ytht, axis=-1) / fr.arclen)[..., None] * fr.tau
    return fr.vGamma + r_t[..., None] * fr.nu + r[..., None] * nu_dot


def inv_transpose_2x2(mats):
    """Inverse transpose of 2x2 matrices stored in the last two axes."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 0]
    d = mats[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(mats)
    out[..., 0, 0] = d / det
    out[..., 0, 1] = -c / det
    out[..., 1, 0] = -b / det
    out[..., 1, 1] = a / det
    return out


def _central_fd(fn, x, h):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


def _fd_with_richardson(fn, x, h):
    """Central difference at step h/2, plus a Richardson consistency gap."""
    d1 = _central_fd(fn, x, h)
    d2 = _central_fd(fn, x, h / 2.0)
    gap = np.max(np.abs((4.0 * d2 - d1) / 3.0 - d2))
    return d2, gap


def validate_frames(scenario, n_theta=64, n_t=16, h=1e-5, tol=1e-6):
    """Cross-check every analytic derivative against central differences.

    Returns a report dict with the maximum discrepancy per quantity; raises
    ValidationError when a discrepancy exceeds `tol`, naming the worst point.
    """
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    # keep FD stencils inside [0, T]
    times = np.linspace(2 * h, scenario.T - 2 * h, n_t)
    checks = {}

    def record(name, analytic, fd, t):
        err = np.max(np.abs(analytic - fd))
        if name not in checks or err > checks[name]["max_discrepancy"]:
            j = int(np.argmax(np.max(np.abs(analytic - fd).reshape(n_theta, -1), axis=1)))
            checks[name] = {
                "max_discrepancy": float(err),
                "theta0": float(theta[j]),
                "t": float(t),
            }

    sigmas = np.array([0.0, 0.25, 0.75, 1.0])
    eps = scenario.epsilon if scenario.epsilon is not None else 0.05
    for t in times:
        fd, _ = _fd_with_richardson(lambda th: scenario.pos(th, t), theta, h)
        record("pos_theta", scenario.pos_th(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda th: scenario.pos_th(th, t), theta, h)
        record("pos_theta2", scenario.pos_thth(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda s: scenario.pos(theta, s), t, h)
        record("pos_t", scenario.pos_t(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda s: scenario.pos_th(theta, s), t, h)
        record("pos_theta_t", scenario.pos_tht(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda s: scenario.g0(theta, s), t, h)
        record("g0_t", scenario.dg0_dt(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda s: scenario.g1(theta, s), t, h)
        record("g1_t", scenario.dg1_dt(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda th: scenario.g0(th, t), theta, h)
        record("g0_theta", scenario.dg0_dth(theta, t), fd, t)
        fd, _ = _fd_with_richardson(lambda th: scenario.g1(th, t), theta, h)
        record("g1_theta", scenario.dg1_dth(theta, t), fd, t)
        for sg in sigmas:
            fd, _ = _fd_with_richardson(
                lambda s: thin_map(scenario, eps, theta, sg, s).position, t, h
            )
            record("material_velocity", material_velocity(scenario, eps, theta, sg, t), fd, t)

    worst = max(checks, key=lambda k: checks[k]["max_discrepancy"])
    report = {
        "scenario": scenario.name,
        "n_theta": n_theta,
        "n_t": n_t,
        "fd_step": h,
        "tolerance": tol,
        "checks": checks,
        "max_discrepancy": checks[worst]["max_discrepancy"],
        "worst_quantity": worst,
        "ok": checks[worst]["max_discrepancy"] <= tol,
    }
    if not report["ok"]:
        w = checks[worst]
        raise ValidationError(
            f"scenario {scenario.name!r}: analytic {worst} disagrees with finite "
            f"differences by {w['max_discrepancy']:.3e} (tol {tol:g}) at "
            f"theta0={w['theta0']:.6f}, t={w['t']:.6f}"
        )
    return report
