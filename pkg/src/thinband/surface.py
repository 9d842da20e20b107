"""Solver for the limit system on the moving curve.

The unknown pair is the curve field v and the pointwise scalar zeta, coupled
through the algebraic equation

    (|grad_curve v|^2 + zeta^2)^((p-2)/2) zeta + V * v = 0,

whose left side is strictly increasing in zeta, so the root is unique and is
eliminated pointwise at the quadrature points inside each assembly.  The PDE
is discretized with periodic linear elements in the material parameter,
arclength measure, 2-point Gauss quadrature, and the same conservative
implicit Euler / Picard policy as the thin solver, so that the weighted
total int g v is conserved exactly for f = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sps

from . import geometry
from .errors import SolverError
from .thin import PICARD_MAXIT, PICARD_TOL, picard_solve, snapshot_indices

ZETA_TOL_FACTOR = 1e-13

_GAUSS_1D = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def solve_zeta(a, b, p, tol_factor=ZETA_TOL_FACTOR):
    """Unique root of phi(s) = (a + s^2)^((p-2)/2) s + b for a >= 0, p >= 2.

    Safeguarded Newton with bisection fallback on the bracket [-m, m],
    m = |b|^(1/(p-1)), which always contains the root because
    |phi(s) - b| >= |s|^(p-1).
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    if p < 2:
        raise ValueError("p must be at least 2")
    if b == 0.0:
        return 0.0
    if p == 2.0:
        return -b
    if a == 0.0:
        # phi(s) = |s|^(p-2) s + b
        return -np.sign(b) * abs(b) ** (1.0 / (p - 1.0))

    def phi(s):
        return (a + s * s) ** ((p - 2.0) / 2.0) * s + b

    def dphi(s):
        return (a + s * s) ** ((p - 4.0) / 2.0) * (a + (p - 1.0) * s * s)

    m = abs(b) ** (1.0 / (p - 1.0))
    lo, hi = (-m, 0.0) if b > 0 else (0.0, m)
    tol = tol_factor * (1.0 + abs(b))
    # |root| <= |b| / a^((p-2)/2) as well; start from the tighter bound
    s = -np.sign(b) * min(m, abs(b) / a ** ((p - 2.0) / 2.0))
    for _ in range(200):
        fs = phi(s)
        if abs(fs) <= tol:
            return s
        if fs > 0:
            hi = s
        else:
            lo = s
        d = dphi(s)
        s_newton = s - fs / d if d > 0 else np.inf
        if lo < s_newton < hi:
            s = s_newton
        else:
            s = 0.5 * (lo + hi)
        if hi - lo < 1e-17 * max(1.0, m):
            return s
    return s


def solve_zeta_many(a, b, p, tol_factor=ZETA_TOL_FACTOR):
    """Vectorized form of solve_zeta (same safeguarded Newton/bisection)."""
    shape = np.broadcast(np.asarray(a), np.asarray(b)).shape
    a = np.broadcast_to(np.asarray(a, dtype=float), shape).ravel()
    b = np.broadcast_to(np.asarray(b, dtype=float), shape).ravel()
    if np.any(a < 0):
        raise ValueError("a must be nonnegative")
    if p < 2:
        raise ValueError("p must be at least 2")
    out = np.zeros_like(b)
    if p == 2.0:
        return (-b).reshape(shape)
    closed = (a == 0.0) & (b != 0.0)
    out[closed] = -np.sign(b[closed]) * np.abs(b[closed]) ** (1.0 / (p - 1.0))

    act = (a > 0.0) & (b != 0.0)
    if np.any(act):
        aa, bb = a[act], b[act]
        m = np.abs(bb) ** (1.0 / (p - 1.0))
        lo = np.where(bb > 0, -m, 0.0)
        hi = np.where(bb > 0, 0.0, m)
        tol = tol_factor * (1.0 + np.abs(bb))
        s = -np.sign(bb) * np.minimum(m, np.abs(bb) / aa ** ((p - 2.0) / 2.0))
        done = np.zeros_like(s, dtype=bool)
        for _ in range(200):
            fs = (aa + s * s) ** ((p - 2.0) / 2.0) * s + bb
            done |= np.abs(fs) <= tol
            if done.all():
                break
            pos = fs > 0
            hi = np.where(~done & pos, s, hi)
            lo = np.where(~done & ~pos, s, lo)
            d = (aa + s * s) ** ((p - 4.0) / 2.0) * (aa + (p - 1.0) * s * s)
            with np.errstate(divide="ignore", invalid="ignore"):
                s_newton = s - fs / d
            mid = 0.5 * (lo + hi)
            inside = (s_newton > lo) & (s_newton < hi) & np.isfinite(s_newton)
            s = np.where(done, s, np.where(inside, s_newton, mid))
            done |= (hi - lo) < 1e-17 * np.maximum(1.0, m)
        out[act] = s
    return out.reshape(shape)


@dataclass(frozen=True)
class SurfaceGrid:
    """Periodic linear elements on the material parameter of the curve."""

    n_theta: int
    quad_order: int = 2

    def __post_init__(self):
        if self.n_theta < 8:
            raise ValueError("n_theta must be at least 8")

    @property
    def dtheta(self):
        return 2.0 * np.pi / self.n_theta

    @property
    def theta_nodes(self):
        return np.arange(self.n_theta) * self.dtheta

    @property
    def theta_quad(self):
        gp = np.array(_GAUSS_1D)
        return (np.arange(self.n_theta)[:, None] + gp[None, :]).ravel() * self.dtheta


@dataclass
class SurfaceState:
    """Nodal v on the curve plus zeta at the quadrature points."""

    t: float
    v: np.ndarray
    zeta: np.ndarray
    picard_iterations: int = 0
    picard_residual: float = 0.0


@dataclass
class SurfaceTrajectory:
    grid: SurfaceGrid
    times: np.ndarray
    states: list
    step_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    conserved: np.ndarray = field(default_factory=lambda: np.empty(0))
    picard_counts: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    source_totals: np.ndarray = field(default_factory=lambda: np.empty(0))

    def mass_identity_residual(self):
        """Max residual of the discrete identity d/dt(int g v) = total source."""
        if self.step_times.size < 2:
            return 0.0
        dt = self.step_times[1] - self.step_times[0]
        cum = np.concatenate([[0.0], np.cumsum(self.source_totals[1:]) * dt])
        return float(np.max(np.abs(self.conserved - self.conserved[0] - cum)))


class _CurveSlice:
    """Geometry and linear matrices of the curve problem at one time."""

    def __init__(self, scenario, grid, t):
        self.scenario = scenario
        self.grid = grid
        self.t = t
        n = grid.n_theta
        theta_q = grid.theta_quad
        fr = geometry.frame(scenario, theta_q, t)
        self.arclen = fr.arclen  # (2n,)
        self.VGamma = fr.VGamma
        self.vTau = fr.vTau
        self.g = scenario.g(theta_q, t)
        self.fq = scenario.f_limit(theta_q, t)

        gp = np.array(_GAUSS_1D)
        # basis of the two element nodes at the two local Gauss points
        self.N = np.stack([1 - gp, gp], axis=0)  # (2 nodes, 2 qp)
        self.dN = np.array([-1.0, 1.0]) / grid.dtheta  # per-element constant

        elems = np.arange(n)
        self.enodes = np.stack([elems, (elems + 1) % n], axis=1)  # (n, 2)
        self.qw = np.full(2, 0.5) * grid.dtheta

        # reshape quadrature data to (n elements, 2 qp)
        shape = (n, 2)
        aq = self.arclen.reshape(shape)
        gq = self.g.reshape(shape)
        wdet = self.qw[None, :] * aq * gq  # g * arclength measure
        self.wdet = wdet
        self.aq = aq
        self.gq = gq

        Mloc = np.einsum("iq,jq,eq->eij", self.N, self.N, wdet)
        # advection: int g vTau phi_j phi_i' dtheta
        vt = self.vTau.reshape(shape)
        Bloc = np.einsum("i,jq,eq->eij", self.dN, self.N,
                         self.qw[None, :] * gq * vt)
        rows = np.repeat(self.enodes, 2, axis=1).ravel()
        cols = np.tile(self.enodes, (1, 2)).ravel()
        self.M = sps.coo_matrix(
            (Mloc.ravel(), (rows, cols)), shape=(n, n)
        ).tocsr()
        self.B = sps.coo_matrix(
            (Bloc.ravel(), (rows, cols)), shape=(n, n)
        ).tocsr()
        self.F = np.zeros(n)
        Floc = np.einsum("iq,eq->ei", self.N, self.fq.reshape(shape) * wdet)
        np.add.at(self.F, self.enodes.ravel(), Floc.ravel())
        self._rows = rows
        self._cols = cols

    def gradient(self, v):
        """Tangential derivative magnitude-squared per quadrature point."""
        dv = (v[self.enodes[:, 1]] - v[self.enodes[:, 0]]) / self.grid.dtheta
        grad = dv[:, None] / self.aq  # (n, 2)
        return grad**2

    def v_at_quad(self, v):
        return np.einsum("ei,iq->eq", v[self.enodes], self.N)

    def zeta_coefficients(self, v):
        """zeta at the quadrature points and the lagged flux coefficient."""
        grad2 = self.gradient(v)
        b = self.VGamma.reshape(grad2.shape) * self.v_at_quad(v)
        zeta = solve_zeta_many(grad2, b, self.scenario.p)
        p = self.scenario.p
        if p == 2.0:
            W = np.ones_like(grad2)
        else:
            W = (grad2 + zeta**2) ** ((p - 2.0) / 2.0)
        return zeta, W

    def stiffness(self, W):
        # int g W phi_j' phi_i' / arclen dtheta
        Aloc = np.einsum("i,j,eq->eij", self.dN, self.dN,
                         self.qw[None, :] * self.gq * W / self.aq)
        n = self.grid.n_theta
        return sps.coo_matrix(
            (Aloc.ravel(), (self._rows, self._cols)), shape=(n, n)
        ).tocsr()


def assemble(scenario, grid, t, v_coeff=None):
    """Assemble (M, A, B, F) and the quadrature-point zeta at time t."""
    sl = _CurveSlice(scenario, grid, t)
    if v_coeff is None:
        v_coeff = np.zeros(grid.n_theta)
    zeta, W = sl.zeta_coefficients(v_coeff)
    return sl.M, sl.stiffness(W), sl.B, sl.F, zeta.ravel()


def step(scenario, grid, state, dt, _slice_old=None, _slice_new=None):
    """One implicit Euler step of the conservative combined weak form."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    old = _slice_old if _slice_old is not None else _CurveSlice(scenario, grid, state.t)
    new = _slice_new if _slice_new is not None else _CurveSlice(scenario, grid, state.t + dt)
    rhs = old.M @ state.v + dt * new.F

    def K_of(v_it):
        _, W = new.zeta_coefficients(v_it)
        return new.M + dt * (new.stiffness(W) + new.B)

    v_new, iters, res = picard_solve(K_of, rhs, state.v, "curve step")
    zeta, _ = new.zeta_coefficients(v_new)
    return SurfaceState(
        t=state.t + dt,
        v=v_new,
        zeta=zeta.ravel(),
        picard_iterations=iters,
        picard_residual=res,
    )


def zeta_residual(scenario, grid, state):
    """Max residual of the pointwise algebraic equation at the quad points."""
    sl = _CurveSlice(scenario, grid, state.t)
    grad2 = sl.gradient(state.v).ravel()
    b = sl.VGamma * sl.v_at_quad(state.v).ravel()
    p = scenario.p
    zeta = state.zeta
    res = (grad2 + zeta**2) ** ((p - 2.0) / 2.0) * zeta + b
    return float(np.max(np.abs(res) / (1.0 + np.abs(b))))


def conserved_total(scenario, grid, state):
    """The conserved weighted total int g v over the curve."""
    sl = _CurveSlice(scenario, grid, state.t)
    return float(np.sum(sl.M @ state.v))


def zeta_nodal(scenario, grid, state):
    """zeta evaluated at the nodes from the centered nodal gradient.

    Diagnostic companion to the quadrature-point field; used when comparing
    against node-based averaged quantities.
    """
    fr = geometry.frame(scenario, grid.theta_nodes, state.t)
    v = state.v
    dv = (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * grid.dtheta)
    grad2 = (dv / fr.arclen) ** 2
    return solve_zeta_many(grad2, fr.VGamma * v, scenario.p)


def solve(scenario, grid, dt, snapshot_times=None, t_end=None, v0=None):
    """Repeated stepping with snapshots and conserved-quantity logging."""
    t_end = scenario.T if t_end is None else t_end
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9:
        raise ValueError(f"t_end {t_end} is not an integer multiple of dt {dt}")
    if snapshot_times is None:
        snapshot_times = [0.0, t_end]
    snap_idx = snapshot_indices(snapshot_times, dt, n_steps)

    if v0 is None:
        v0 = scenario.v0(grid.theta_nodes)
    v0 = np.asarray(v0, dtype=float).copy()
    sl = _CurveSlice(scenario, grid, 0.0)
    zeta0, _ = sl.zeta_coefficients(v0)
    state = SurfaceState(t=0.0, v=v0, zeta=zeta0.ravel())

    snaps = {}
    if 0 in snap_idx:
        snaps[0] = state
    conserved = np.zeros(n_steps + 1)
    picard = np.zeros(n_steps + 1, dtype=int)
    sources = np.zeros(n_steps + 1)
    conserved[0] = float(np.sum(sl.M @ state.v))
    sources[0] = float(np.sum(sl.F))

    for k in range(1, n_steps + 1):
        sl_new = _CurveSlice(scenario, grid, k * dt)
        state = step(scenario, grid, state, dt, _slice_old=sl, _slice_new=sl_new)
        sl = sl_new
        conserved[k] = float(np.sum(sl.M @ state.v))
        picard[k] = state.picard_iterations
        sources[k] = float(np.sum(sl.F))
        if k in snap_idx:
            snaps[k] = replace(state)

    return SurfaceTrajectory(
        grid=grid,
        times=np.asarray([k * dt for k in snap_idx]),
        states=[snaps[k] for k in snap_idx],
        step_times=np.arange(n_steps + 1) * dt,
        conserved=conserved,
        picard_counts=picard,
        source_totals=sources,
    )
