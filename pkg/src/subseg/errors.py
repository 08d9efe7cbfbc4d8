"""Exception types shared across the package.

The CLI maps these onto process exit codes: ParameterError -> 1 (usage),
DataError -> 2 (data/validation), OSError -> 3 (I/O).
"""


class SubsegError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(SubsegError):
    """An argument or configuration value is out of its valid range."""


class DataError(SubsegError):
    """Input data violates a contract (bad format, mismatch, empty, ...)."""
