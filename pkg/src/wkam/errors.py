"""Exception types raised across the package."""


class WkamError(Exception):
    """Base class for all package errors."""


class DomainError(WkamError, ValueError):
    """Input outside the domain of an operation (non-finite values, |c| too large, ...)."""


class ModelError(WkamError, ValueError):
    """A model violates a structural assumption (sign of F, degenerate zeros, convexity)."""


class ConvergenceError(WkamError, RuntimeError):
    """An iterative procedure did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual={residual:.3e})")
        self.residual = residual


class ControlRadiusError(WkamError, RuntimeError):
    """A Bellman argmin landed on the boundary of the control box."""


class FeasibilityError(WkamError, ValueError):
    """Requested jump placement admits no stationary solution."""


class BlowUpError(WkamError, RuntimeError):
    """Trajectory left the a-priori bounded region."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation


class InconclusiveError(WkamError, RuntimeError):
    """Not enough evidence to report an alpha-limit set; a longer horizon is needed."""
