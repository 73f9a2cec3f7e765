"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class UsageError(Exception):
    """Bad flag, unknown preset, or malformed configuration."""


class DataError(Exception):
    """Missing, malformed, or inconsistent input data."""


class NumericalError(Exception):
    """Numerical failure (divergence, non-separable training set, ...)."""
