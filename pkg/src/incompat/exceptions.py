"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class GridMismatchError(ValueError):
    """Two fields that must share a grid do not."""


class NumericalError(RuntimeError):
    """An iterative method failed to reach its tolerance.

    ``history`` carries the residual or energy sequence for diagnostics.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class ConfigError(ValueError):
    """An experiment configuration is malformed."""
