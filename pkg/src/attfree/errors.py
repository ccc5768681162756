"""Exception types shared across the package."""


class AttfreeError(Exception):
    """Base class for all package-specific errors."""


class DataError(AttfreeError):
    """Input data is malformed, inconsistent, or insufficient."""


class NumericalError(AttfreeError):
    """The optimizer or a residual evaluation produced unusable numbers."""
