"""Exception types shared across the package."""


class QmarlError(Exception):
    """Base class for all package errors."""


class SizeError(QmarlError, ValueError):
    """Qubit count outside the supported range."""


class WireError(QmarlError, ValueError):
    """Wire index invalid for the state, or a malformed wire subset."""


class DimensionError(QmarlError, ValueError):
    """Input vector length incompatible with the receiving network."""


class ConfigError(QmarlError, ValueError):
    """Invalid or inconsistent configuration."""


class ActionError(QmarlError, ValueError):
    """Action outside the environment's action set."""


class BatchError(QmarlError, ValueError):
    """Empty or malformed training batch."""


class DataError(QmarlError, ValueError):
    """Non-finite or otherwise unusable numeric data."""


class BudgetInfeasibleError(QmarlError, ValueError):
    """Requested parameter budget cannot be met.

    Carries the minimum representable parameter count so callers can report
    why the budget fails.
    """

    def __init__(self, message: str, minimum_params: int):
        super().__init__(message)
        self.minimum_params = minimum_params
