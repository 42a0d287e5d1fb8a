"""Numerical laboratory for elasticity with weakly incompatible reference metrics.

Bodies are chart patches of the unit sphere or the plane.  The package
provides the rescaled nonlinear energy ``E_eps``, its linearised limit
``E_0``, the projection of a metric discrepancy onto the range of the
deformation operator, and the rigidity and recovery constructions that
relate the two.
"""
from .exceptions import ConfigError, DomainError, GridMismatchError, NumericalError
from .grid import ChartGrid

__all__ = ["ChartGrid", "ConfigError", "DomainError", "GridMismatchError", "NumericalError"]
__version__ = "0.1.0"
