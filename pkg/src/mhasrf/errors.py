"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericalError -> 3,
anything argparse-shaped -> 1.
"""


class MhasrfError(Exception):
    """Base class for all package errors."""


class DataError(MhasrfError):
    """Bad or unusable input data: missing files, missing columns, zero rows."""


class ModelFormatError(DataError):
    """Unreadable model file: bad header, checksum mismatch, unsupported version."""


class NumericalError(MhasrfError):
    """Numerical failure during optimization, e.g. divergence to non-finite loss."""
