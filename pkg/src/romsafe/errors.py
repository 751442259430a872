"""Exception types shared across the package."""


class ContractError(ValueError):
    """A caller violated an interface contract (bad shape, non-finite input).

    These indicate programming errors, not recoverable runtime conditions.
    """


class InfeasibleFilterError(RuntimeError):
    """The safety filter constraint is active but its normal vector vanishes."""


class EstimationError(RuntimeError):
    """A constant-fitting procedure could not produce admissible values."""


class InconclusiveError(RuntimeError):
    """A sampling-based procedure found no evidence either way."""


class RolloutDiverged(RuntimeError):
    """Integration produced a non-finite state. Carries the log up to the failure."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class ConfigError(ValueError):
    """An experiment configuration violates the published schema."""
