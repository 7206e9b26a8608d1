"""Spectral toolkit for the De Gennes (Robin) magnetic boundary problem."""

__version__ = "0.1.0"

from .errors import (
    ConditioningError,
    ConfigurationError,
    DiagnosticsError,
    DomainError,
    FittingError,
    SolverError,
)

__all__ = [
    "ConditioningError",
    "ConfigurationError",
    "DiagnosticsError",
    "DomainError",
    "FittingError",
    "SolverError",
    "__version__",
]
