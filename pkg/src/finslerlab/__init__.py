"""Finsler metric-measure geometry on 2-D model spaces and numerical checks
of comparison, functional and parabolic inequalities."""
from .errors import FinslerError
from .grid import Ball, Grid2D, ScalarField, SpaceTimeField
from .measure import MeasureModel
from .metric import MetricModel
from .report import InequalityReport

__version__ = "0.1.0"

__all__ = ["Ball", "FinslerError", "Grid2D", "InequalityReport", "MeasureModel", "MetricModel", "ScalarField",
           "SpaceTimeField", "__version__"]
