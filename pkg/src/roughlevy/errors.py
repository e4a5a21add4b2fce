"""Exception types shared by all modules."""


class RoughLevyError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RoughLevyError, ValueError):
    """Invalid parameters or a degenerate configuration."""


class DomainError(RoughLevyError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(RoughLevyError, ValueError):
    """Mismatched grids, shapes or meshes."""


class NumericError(RoughLevyError, ArithmeticError):
    """Non-finite values or a failed numerical procedure."""


class ConvergenceError(NumericError):
    """An iteration did not converge; carries the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(RoughLevyError, ValueError):
    """Too few samples or mesh scales for a requested fit."""


class DependencyError(RoughLevyError, ValueError):
    """A required input produced by another module is missing."""
