"""Exception hierarchy shared across the package.

Each class carries a short ``category`` string that the CLI prints as a
machine-parsable error prefix.
"""


class RkdeError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class DimensionMismatch(RkdeError):
    """Inputs whose dimensions do not agree."""

    category = "dimension"


class DataError(RkdeError):
    """Malformed input data (parse or schema problems)."""

    category = "data"


class NumericsError(RkdeError):
    """Numerical failure: singular systems, non-finite values, underflow."""

    category = "numeric"


class FitError(RkdeError):
    """Estimator fitting cannot proceed or produced an invalid state."""

    category = "fit"


class UnsupportedError(RkdeError):
    """Requested an operation outside the supported configuration."""

    category = "unsupported"
