"""Exception hierarchy."""


class PararealHeatError(Exception):
    """Base class for all package errors."""


class GeometryError(PararealHeatError, ValueError):
    """Strip geometry is outside the unit square or degenerate."""


class AssemblyError(PararealHeatError):
    """Finite element assembly met a degenerate element."""


class SolverError(PararealHeatError, ArithmeticError):
    """A linear solver did not reach its tolerance.

    The final relative residual is kept in ``residual``.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConfigurationError(PararealHeatError, ValueError):
    """Invalid run configuration (step counts, divisibility, unknown names)."""


class UnsupportedConfigurationError(ConfigurationError):
    """The requested analysis is not defined for this configuration."""
