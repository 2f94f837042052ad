"""Numerical verification of space-time Ricci soliton constructions.

Modules: ``flows`` (exact Ricci flows), ``tensor`` (coordinate tensor
calculus), ``soliton`` (space-time metrics and their residuals), ``lgeo``
(L-length minimisation and length expansions), ``transport`` (diffusions
and optimal-transport monotonicity on the circle) and ``cli``.
"""

from importlib.metadata import PackageNotFoundError, version

from .errors import (CFLError, ConfigError, ConvergenceError, DomainError, PositivityError,
                     SingularMetricError, SolitonLabError)
from .flows import FlowFamily, SpacetimePoint, flat_flow, get_flow, hyperbolic_flow, product_flow, sphere_flow
from .soliton import SpacetimeMetric

try:
    __version__ = version("solitonlab")
except PackageNotFoundError:
    __version__ = "0.1.0"

__all__ = [
    "CFLError",
    "ConfigError",
    "ConvergenceError",
    "DomainError",
    "FlowFamily",
    "PositivityError",
    "SingularMetricError",
    "SolitonLabError",
    "SpacetimeMetric",
    "SpacetimePoint",
    "__version__",
    "flat_flow",
    "get_flow",
    "hyperbolic_flow",
    "product_flow",
    "sphere_flow",
]
