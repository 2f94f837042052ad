"""Exception types shared across the package."""


class SolitonLabError(Exception):
    """Base class for all package errors."""


class DomainError(SolitonLabError, ValueError):
    """An evaluation point is not admissible."""


class PointOutsideChart(DomainError):
    pass


class TauOutsideInterval(DomainError):
    pass


class InsufficientMargin(DomainError):
    """A finite-difference stencil would leave the domain."""


class SingularMetricError(SolitonLabError, ArithmeticError):
    """Metric is not positive definite or too ill-conditioned to invert."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class PositivityError(SolitonLabError, ValueError):
    """The time-time component of a space-time metric is not positive."""

    def __init__(self, message, value, minimal_N):
        super().__init__(message)
        self.value = value
        self.minimal_N = minimal_N


class MissingAnalyticData(SolitonLabError, LookupError):
    pass


class ConvergenceError(SolitonLabError, RuntimeError):
    """An iterative method stopped without meeting its tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class CFLError(SolitonLabError, ValueError):
    """Requested time step violates the diffusion step-size rule."""


class ConfigError(SolitonLabError, ValueError):
    """Invalid suite configuration (CLI exit status 2)."""
