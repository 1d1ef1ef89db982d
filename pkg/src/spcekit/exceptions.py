"""Exception hierarchy shared across the package."""


class SpcekitError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(SpcekitError):
    """Unsupported or inconsistent configuration (marginals, ids, paths)."""


class ValidationError(SpcekitError):
    """Input data violates a documented precondition."""


class ConditioningError(SpcekitError):
    """Linear-algebra problem is rank deficient or too ill-conditioned."""

    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = list(columns) if columns is not None else []


class NumericalError(SpcekitError):
    """A numerical routine (eigensolve, integration) failed."""


class FitError(SpcekitError):
    """Optimization or model selection failed to produce a usable result."""
