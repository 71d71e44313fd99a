"""Exception types shared across the package."""


class SymmetryError(ValueError):
    """Input matrix is not symmetric within tolerance."""


class NotPositiveDefiniteError(ValueError):
    """Input matrix has an eigenvalue at or below the positive-definiteness floor."""


class ConvergenceError(RuntimeError):
    """Iterative mean did not reach the requested tolerance.

    The last gradient norm is kept on ``grad_norm``.
    """

    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


class DimensionMismatchError(ValueError):
    pass


class ClassCoverageError(ValueError):
    """A required class is missing or has too few trials."""


class FormatError(ValueError):
    """A file does not follow the expected binary or text layout."""


class ConfigError(ValueError):
    pass
