"""
backend/errors.py
Exception taxonomy shared by the engine, the CLI and the HTTP surface.

Each class also derives from the builtin it specialises, so callers that only
know ``ValueError`` / ``RuntimeError`` keep working.
"""


class DbrError(Exception):
    """Root of every error raised by the dbr-sbm engine."""


class ParameterError(DbrError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ContractError(DbrError, ValueError):
    """A documented precondition of an operation was violated."""


class ConfigError(DbrError, ValueError):
    """The run configuration could not be read or validated."""


class ScheduleStateError(DbrError, RuntimeError):
    """The bottleneck schedule was asked to do something its state forbids."""


class AccountingError(DbrError, RuntimeError):
    """An inventory level integrator would go negative or back in time."""


class EmptyResultError(DbrError, LookupError):
    """No fully evaluated iteration is available to choose from."""


class SweepError(DbrError, RuntimeError):
    """A replication inside a sweep failed; carries its grid coordinate."""

    def __init__(self, message: str, *, shop_load: float, cv_ppt: float,
                 ccr_buffer: int, shipping_buffer: int, replication: int):
        self.shop_load       = shop_load
        self.cv_ppt          = cv_ppt
        self.ccr_buffer      = ccr_buffer
        self.shipping_buffer = shipping_buffer
        self.replication     = replication
        super().__init__(
            f"{message} (env={shop_load}:{cv_ppt}, C={ccr_buffer}, "
            f"S={shipping_buffer}, replication={replication})"
        )
