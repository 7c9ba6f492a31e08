"""Exception types shared across the package."""


class LdlError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LdlError, ValueError):
    """Invalid configuration, grid ordering, or domain-model input."""


class DomainError(LdlError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DegenerateInputError(LdlError, ValueError):
    """Input that makes a quantity undefined (e.g. zero variance in a correlation)."""


class NumericsError(LdlError, RuntimeError):
    """Numerical failure inside a solver step."""


class SingularOperatorError(NumericsError):
    """Zero pivot met while factoring a banded operator without permutation."""


class ConvergenceError(NumericsError):
    """An iteration (ADI sweep or Picard loop) failed to reach tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class OracleError(LdlError, RuntimeError):
    """An oracle comparison exceeded its agreed tolerance."""
