"""Relaxation Runge-Kutta methods, test problems and analysis tools."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import RRKError
from .integrators import GammaMode, OdeProblem, Scheme, Trajectory, integrate
from .problems import get_problem
from .tableaux import REGISTRY, ButcherTableau, registry_get

__all__ = [
    "__version__",
    "RRKError",
    "GammaMode",
    "OdeProblem",
    "Scheme",
    "Trajectory",
    "integrate",
    "get_problem",
    "REGISTRY",
    "ButcherTableau",
    "registry_get",
]
