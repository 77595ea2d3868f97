"""Exception hierarchy shared across the package."""


class GvbError(Exception):
    """Base class for all errors raised by gvbridge."""


class DimensionError(GvbError, ValueError):
    """Operand shapes are incompatible."""


class ConfigError(GvbError, ValueError):
    """A configuration value is invalid."""


class DataError(GvbError, ValueError):
    """Input data violates a contract (labels, weights, CSV layout)."""


class ContractError(GvbError, RuntimeError):
    """An API precondition was violated by the caller."""


class TrainingAborted(GvbError, RuntimeError):
    """Training hit a non-finite loss.

    ``record`` holds the diagnostic snapshot of the offending iteration.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
