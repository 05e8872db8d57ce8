"""Finite-volume laboratory for time-averaged quantum dynamics and scaling exponents."""

from .errors import HorizonError, SolverError, ValidationError
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "HorizonError", "SolverError", "ValidationError", "__version__"]
