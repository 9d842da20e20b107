"""Problem instances: moving curve families, band profiles and data.

A scenario bundles a prescribed moving closed plane curve y(theta0, t), the
band profile functions g0, g1, the diffusion exponent p, the source f, the
initial curve datum v0 and the time horizon T.  All functions are given in
Lagrangian material coordinates, so time derivatives at fixed theta0 are the
material derivatives used everywhere downstream.

Curves and data are specified symbolically (built-in curve families with
numeric parameters, sympy-parsable expressions for g0/g1/f/v0) so that every
derivative the solvers need is available in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ScenarioError

_TH, _SG, _T = sp.symbols("theta0 sigma t", real=True)

#: numeric parameters required by each built-in curve family
CURVE_FAMILIES = {
    "circle": ("radius",),
    "expanding_circle": ("radius0", "rate"),
    "ellipse": ("a", "b"),
    "pulsating_ellipse": ("a0", "b0", "amp", "omega"),
    "star": ("radius0", "amp", "k"),
}

_SCENARIO_KEYS = {"name", "p", "T", "curve", "g0", "g1", "f", "v0", "epsilon"}
_CURVE_KEYS = {"family", "params"}


def _curve_expr(family, params):
    """Symbolic position y(theta0, t) of a built-in curve family."""
    if family == "circle":
        r = params["radius"]
        return sp.Matrix([r * sp.cos(_TH), r * sp.sin(_TH)])
    if family == "expanding_circle":
        r = params["radius0"] + params["rate"] * _T
        return sp.Matrix([r * sp.cos(_TH), r * sp.sin(_TH)])
    if family == "ellipse":
        return sp.Matrix([params["a"] * sp.cos(_TH), params["b"] * sp.sin(_TH)])
    if family == "pulsating_ellipse":
        s = sp.sin(params["omega"] * _T)
        a = params["a0"] * (1 + params["amp"] * s)
        b = params["b0"] * (1 - params["amp"] * s)
        return sp.Matrix([a * sp.cos(_TH), b * sp.sin(_TH)])
    if family == "star":
        rho = params["radius0"] + params["amp"] * sp.cos(params["k"] * _TH)
        return sp.Matrix([rho * sp.cos(_TH), rho * sp.sin(_TH)])
    raise ScenarioError(f"unknown curve family {family!r}")


def _parse_expr(text, allowed, what):
    try:
        expr = sp.sympify(text, locals={"theta0": _TH, "sigma": _SG, "t": _T})
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ScenarioError(f"cannot parse {what} expression {text!r}: {exc}") from None
    extra = expr.free_symbols - set(allowed)
    if extra:
        names = ", ".join(sorted(str(s) for s in extra))
        raise ScenarioError(f"{what} expression {text!r} uses unknown symbols: {names}")
    return expr


def _scalar_fn(expr, args):
    """Lambdify a scalar sympy expression, broadcasting over array inputs."""
    raw = sp.lambdify(args, expr, modules="numpy")

    def fn(*vals):
        arrs = [np.asarray(v, dtype=float) for v in vals]
        shape = np.broadcast_shapes(*(a.shape for a in arrs))
        out = np.asarray(raw(*arrs), dtype=float)
        return np.broadcast_to(out, shape).copy()

    return fn


def _vector_fn(expr_vec, args):
    fx = _scalar_fn(expr_vec[0], args)
    fy = _scalar_fn(expr_vec[1], args)

    def fn(*vals):
        return np.stack([fx(*vals), fy(*vals)], axis=-1)

    return fn


@dataclass
class Scenario:
    """One full problem instance.

    Treated as immutable after construction; all evaluation methods are pure,
    so a single Scenario can be shared between concurrent solves.
    """

    name: str
    p: float
    T: float
    curve_family: str
    curve_params: dict
    g0_expr: str
    g1_expr: str
    f_expr: str
    v0_expr: str
    epsilon: float | None = None

    # callables built in __post_init__ (closed-form derivatives of the curve,
    # the band profiles and the data)
    pos: Callable = field(init=False, repr=False, compare=False)
    pos_th: Callable = field(init=False, repr=False, compare=False)
    pos_thth: Callable = field(init=False, repr=False, compare=False)
    pos_t: Callable = field(init=False, repr=False, compare=False)
    pos_tht: Callable = field(init=False, repr=False, compare=False)
    g0: Callable = field(init=False, repr=False, compare=False)
    g1: Callable = field(init=False, repr=False, compare=False)
    dg0_dt: Callable = field(init=False, repr=False, compare=False)
    dg1_dt: Callable = field(init=False, repr=False, compare=False)
    dg0_dth: Callable = field(init=False, repr=False, compare=False)
    dg1_dth: Callable = field(init=False, repr=False, compare=False)
    f_thin: Callable = field(init=False, repr=False, compare=False)
    v0: Callable = field(init=False, repr=False, compare=False)
    f_depends_on_sigma: bool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.p) or self.p < 2:
            raise ScenarioError(f"exponent p must satisfy p >= 2, got {self.p}")
        if not np.isfinite(self.T) or self.T <= 0:
            raise ScenarioError(f"final time T must be positive, got {self.T}")
        if self.curve_family not in CURVE_FAMILIES:
            raise ScenarioError(
                f"unknown curve family {self.curve_family!r}; "
                f"choose one of {sorted(CURVE_FAMILIES)}"
            )
        required = CURVE_FAMILIES[self.curve_family]
        missing = set(required) - set(self.curve_params)
        extra = set(self.curve_params) - set(required)
        if missing or extra:
            raise ScenarioError(
                f"curve family {self.curve_family!r} takes parameters "
                f"{sorted(required)}; missing {sorted(missing)}, extra {sorted(extra)}"
            )
        params = {k: float(v) for k, v in self.curve_params.items()}

        y = _curve_expr(self.curve_family, params)
        ta = (_TH, _T)
        self.pos = _vector_fn(y, ta)
        self.pos_th = _vector_fn(y.diff(_TH), ta)
        self.pos_thth = _vector_fn(y.diff(_TH, 2), ta)
        self.pos_t = _vector_fn(y.diff(_T), ta)
        self.pos_tht = _vector_fn(y.diff(_TH).diff(_T), ta)

        g0e = _parse_expr(self.g0_expr, (_TH, _T), "g0")
        g1e = _parse_expr(self.g1_expr, (_TH, _T), "g1")
        self.g0 = _scalar_fn(g0e, ta)
        self.g1 = _scalar_fn(g1e, ta)
        self.dg0_dt = _scalar_fn(g0e.diff(_T), ta)
        self.dg1_dt = _scalar_fn(g1e.diff(_T), ta)
        self.dg0_dth = _scalar_fn(g0e.diff(_TH), ta)
        self.dg1_dth = _scalar_fn(g1e.diff(_TH), ta)

        fe = _parse_expr(self.f_expr, (_TH, _SG, _T), "f")
        self.f_depends_on_sigma = _SG in fe.free_symbols
        self.f_thin = _scalar_fn(fe, (_TH, _SG, _T))

        v0e = _parse_expr(self.v0_expr, (_TH,), "v0")
        self.v0 = _scalar_fn(v0e, (_TH,))

        self._check_samples()

    # -- data access ------------------------------------------------------

    def g(self, theta, t):
        """Band width g = g1 - g0."""
        return self.g1(theta, t) - self.g0(theta, t)

    def f_limit(self, theta, t):
        """Source of the limit problem; requires f independent of sigma."""
        if self.f_depends_on_sigma:
            raise ScenarioError(
                f"scenario {self.name!r}: f depends on sigma and cannot be "
                "used as a source for the limit problem"
            )
        return self.f_thin(theta, 0.0, t)

    # -- validation -------------------------------------------------------

    def _check_samples(self, n_theta=256, n_t=5):
        theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
        times = np.linspace(0.0, self.T, n_t)
        for t in times:
            yth = self.pos_th(theta, t)
            arclen = np.hypot(yth[:, 0], yth[:, 1])
            if not np.all(np.isfinite(arclen)) or arclen.min() < 1e-9:
                j = int(np.argmin(arclen))
                raise ScenarioError(
                    f"scenario {self.name!r}: degenerate curve, "
                    f"|dy/dtheta| = {arclen[j]:.3e} at theta0={theta[j]:.6f}, t={t:.6f}"
                )
            y = self.pos(theta, t)
            # shoelace integral; positive iff counterclockwise
            area = 0.5 * np.mean(y[:, 0] * yth[:, 1] - y[:, 1] * yth[:, 0]) * 2 * np.pi
            if area <= 0:
                raise ScenarioError(
                    f"scenario {self.name!r}: curve is not counterclockwise at t={t:.6f}"
                )
            gw = self.g(theta, t)
            if not np.all(np.isfinite(gw)) or gw.min() <= 1e-9:
                j = int(np.argmin(gw))
                raise ScenarioError(
                    f"scenario {self.name!r}: band width g = g1 - g0 must be "
                    f"positive, got {gw[j]:.3e} at theta0={theta[j]:.6f}, t={t:.6f}"
                )

    # -- (de)serialization ------------------------------------------------

    def to_dict(self):
        d = {
            "name": self.name,
            "p": self.p,
            "T": self.T,
            "curve": {"family": self.curve_family, "params": dict(self.curve_params)},
            "g0": self.g0_expr,
            "g1": self.g1_expr,
            "f": self.f_expr,
            "v0": self.v0_expr,
        }
        if self.epsilon is not None:
            d["epsilon"] = self.epsilon
        return d

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ScenarioError("scenario document must be a JSON object")
        unknown = set(data) - _SCENARIO_KEYS
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        missing = (_SCENARIO_KEYS - {"epsilon"}) - set(data)
        if missing:
            raise ScenarioError(f"missing scenario keys: {sorted(missing)}")
        curve = data["curve"]
        if not isinstance(curve, dict) or set(curve) != _CURVE_KEYS:
            raise ScenarioError(
                "scenario 'curve' must be an object with keys 'family' and 'params'"
            )
        return cls(
            name=str(data["name"]),
            p=float(data["p"]),
            T=float(data["T"]),
            curve_family=str(curve["family"]),
            curve_params=dict(curve["params"]),
            g0_expr=str(data["g0"]),
            g1_expr=str(data["g1"]),
            f_expr=str(data["f"]),
            v0_expr=str(data["v0"]),
            epsilon=float(data["epsilon"]) if "epsilon" in data else None,
        )


def load_scenario(path):
    """Load and validate a scenario JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from None
    return Scenario.from_dict(data)


def builtin_scenario(name):
    """Load one of the scenario files shipped with the package."""
    from importlib.resources import files

    res = files("thinband") / "scenarios" / f"{name}.json"
    if not res.is_file():
        raise ScenarioError(f"no built-in scenario named {name!r}")
    return Scenario.from_dict(json.loads(res.read_text(encoding="utf-8")))


def builtin_scenario_names():
    from importlib.resources import files

    res = files("thinband") / "scenarios"
    return sorted(f.name[:-5] for f in res.iterdir() if f.name.endswith(".json"))
