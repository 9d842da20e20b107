"""Nonlinear diffusion in a moving thin band and its on-curve limit."""

from .errors import (
    GeometryError,
    ScenarioError,
    SolverError,
    ThinbandError,
    ValidationError,
)
from .scenario import Scenario, builtin_scenario, builtin_scenario_names, load_scenario

__all__ = [
    "GeometryError",
    "Scenario",
    "ScenarioError",
    "SolverError",
    "ThinbandError",
    "ValidationError",
    "builtin_scenario",
    "builtin_scenario_names",
    "load_scenario",
]

__version__ = "0.1.0"
