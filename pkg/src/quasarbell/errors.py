"""Exception types shared across the toolkit."""


class QuasarBellError(Exception):
    """Base class for all toolkit errors."""


class DomainError(QuasarBellError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class DataError(QuasarBellError, ValueError):
    """Input data is malformed, inconsistent or insufficient."""


class NoLockError(DataError):
    """Clock-drift estimation found no coincidence peak above background."""


class InternalError(QuasarBellError, RuntimeError):
    """An internal consistency check failed; indicates a bug."""
