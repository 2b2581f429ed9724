"""Exception types shared across the package."""


class SbmimoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SbmimoError):
    """Invalid scenario or experiment configuration."""


class StructuralError(SbmimoError):
    """Dimension or layout mismatch between matrices."""


class NumericError(SbmimoError):
    """Numerical failure (non-finite input, Cholesky breakdown, ...)."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class InputError(SbmimoError):
    """Invalid input value (empty samples, zero vector, ...)."""
