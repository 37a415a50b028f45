"""Exception hierarchy shared across the package."""


class TCSKError(Exception):
    """Base class for all package errors."""


class GridMismatchError(TCSKError, ValueError):
    """Two fields that must share a grid do not."""


class NonFiniteFieldError(TCSKError, ValueError):
    """A field contains NaN or infinite samples."""


class InvalidMetricError(TCSKError, ValueError):
    """The metric omega_0 + i dd^c phi failed the pointwise positivity test.

    Attributes
    ----------
    min_eigenvalue : float
        Smallest pointwise eigenvalue of g found on the grid.
    """

    def __init__(self, message, min_eigenvalue=float("nan")):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(TCSKError, RuntimeError):
    """An iterative solver hit its iteration budget.

    ``history`` carries whatever diagnostics the solver collected
    (typically the residual sup-norm per iteration).
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class KrylovBreakdown(ConvergenceError):
    """The inner Krylov solve failed to produce a usable direction."""


class ConfigError(TCSKError, ValueError):
    """A run configuration failed validation.

    ``key`` is the dotted path of the offending entry, when known.
    """

    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class FieldFileError(TCSKError, OSError):
    """A TCSK field file is malformed or has an unsupported version."""
