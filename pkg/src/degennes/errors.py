"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A grid, mesh, or run configuration violates a stated precondition."""


class DomainError(ValueError):
    """An input lies outside the supported parameter or coordinate domain."""


class SolverError(RuntimeError):
    """An eigensolver or linear solver failed to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ConditioningError(RuntimeError):
    """A linear system is too close to singular to solve reliably."""


class FittingError(RuntimeError):
    """A least-squares fit cannot be performed (e.g. rank-deficient design)."""


class DiagnosticsError(RuntimeError):
    """A diagnostic quantity cannot be computed from the available data."""
