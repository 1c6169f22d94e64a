"""Exception types shared across the package."""


class SurvCopError(Exception):
    """Base class for all package errors."""


class DomainError(SurvCopError, ValueError):
    """An argument lies outside the support of a distribution or copula."""


class ValidationError(SurvCopError, ValueError):
    """Input data, configuration or model files failed validation."""


class NonFiniteError(SurvCopError, FloatingPointError):
    """A log-likelihood, gradient or risk evaluated to a non-finite value.

    ``indices`` holds the offending observation indices when known.
    """

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = [] if indices is None else list(indices)


class ConvergenceError(SurvCopError, RuntimeError):
    """An iterative numerical routine did not converge."""
