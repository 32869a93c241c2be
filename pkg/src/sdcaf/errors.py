"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """A parameter, identifier or config field is invalid."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class HorizonExhausted(RuntimeError):
    """The environment was stepped past its horizon."""


class UndefinedEstimate(ValueError):
    """A mean was requested over an empty set of time steps."""


class VerificationUnavailable(RuntimeError):
    """A verification check needs the ground-truth ledger but none was given."""


class ResourceError(RuntimeError):
    """A run would exceed the configured horizon or memory guards."""
