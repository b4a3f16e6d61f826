"""Exception taxonomy.

FormatError covers malformed on-disk data (CSV/TSV/checkpoint parsing);
ContractError covers violated call preconditions (shape mismatches, empty
inputs). The CLI maps both to exit code 2.
"""


class VtinvError(Exception):
    """Base class for all package-specific errors."""


class FormatError(VtinvError):
    """A file or stream does not match its declared format."""


class ContractError(VtinvError):
    """An operation was called with inputs violating its precondition."""
