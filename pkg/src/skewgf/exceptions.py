"""Exception types raised by skewgf."""


class SkewGFError(Exception):
    """Base class for all library errors."""


class KernelError(SkewGFError, ValueError):
    """Invalid kernel parameters or an unsupported derivative order."""


class DimensionMismatchError(SkewGFError, ValueError):
    pass


class NotOrthogonalError(SkewGFError, ValueError):
    pass


class DegenerateKernelError(SkewGFError, ValueError):
    """The kernel has h'(0) >= 0 or h''(0) <= 0, so the derivative laws collapse."""


class IllConditionedGramError(SkewGFError, ArithmeticError):
    """Cholesky failed even at the largest allowed jitter."""

    def __init__(self, message, pivot=None, jitter=None):
        super().__init__(message)
        self.pivot = pivot
        self.jitter = jitter


class NoCriticalRadiusError(SkewGFError, ArithmeticError):
    pass


class InconsistentVarianceError(SkewGFError, ArithmeticError):
    """A closed-form variance came out clearly negative (formula or sign bug)."""


class ConfigError(SkewGFError, ValueError):
    """A run configuration failed to parse or validate."""
