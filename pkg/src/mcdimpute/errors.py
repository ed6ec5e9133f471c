"""Exception types shared across the package.

The CLI maps these onto its exit codes: usage errors exit 1, data errors
exit 2, numeric divergence exits 3.
"""


class UsageError(ValueError):
    """Invalid arguments, flags, or configuration values."""


class DataError(ValueError):
    """Unreadable, malformed, or unusable input data."""


class DivergenceError(RuntimeError):
    """Training or optimization produced non-finite values."""
