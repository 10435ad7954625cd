"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input model, file, or instance violates its contract."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver fails to reach its tolerance."""
