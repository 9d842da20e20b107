"""Exception types shared across the package."""


class ThinbandError(Exception):
    """Base class for all thinband errors."""


class ScenarioError(ThinbandError):
    """Invalid scenario file or scenario parameters."""


class GeometryError(ThinbandError):
    """Degenerate curve or self-intersecting band."""


class SolverError(ThinbandError):
    """Nonlinear or linear solve failure."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ValidationError(ThinbandError):
    """Analytic derivatives disagree with finite differences."""
