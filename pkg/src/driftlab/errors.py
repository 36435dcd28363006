"""Exception types shared across the package."""


class DriftLabError(Exception):
    """Base class for all package errors."""


class InvalidInput(DriftLabError, ValueError):
    """Malformed or out-of-contract argument."""


class DomainError(DriftLabError, ValueError):
    """Evaluation requested outside a field's domain of definition."""


class ConvergenceError(DriftLabError, RuntimeError):
    """An iteration failed to reach its tolerance within the cap."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SolverError(DriftLabError, RuntimeError):
    """A linear solve failed or exceeded its residual tolerance."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class LyapunovFailure(DriftLabError, RuntimeError):
    """No truncation radius achieves the confinement threshold below the cap."""


class StationarityError(DriftLabError, RuntimeError):
    """Stationary-density computation produced an invalid or unconverged result."""


class SupportError(DriftLabError, ValueError):
    """A test function's support extends outside the allowed region."""
