"""Figures from thin-band solver output files."""

from .render import KINDS, FigureSpec, PlotError, least_squares_slope, render

__all__ = ["KINDS", "FigureSpec", "PlotError", "least_squares_slope", "render"]

__version__ = "0.1.0"
