"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 2, malformed or
mismatched data exits 3, numeric contract violations exit 4.
"""


class XrnpeError(Exception):
    """Base class for package-specific failures."""


class DataError(XrnpeError):
    """Malformed container, mismatched shapes/formats, or bad input files."""


class NumericContractViolation(XrnpeError):
    """An arithmetic invariant was broken (e.g. quire overflow)."""
