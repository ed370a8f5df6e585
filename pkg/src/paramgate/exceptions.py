"""Exception hierarchy shared by all modules."""


class ParamGateError(Exception):
    """Base class for every error raised by this package."""


class InvalidTruncation(ParamGateError, ValueError):
    pass


class DimensionMismatch(ParamGateError, ValueError):
    pass


class SingularityError(ParamGateError, ZeroDivisionError):
    """A closed-form expression was evaluated at one of its poles."""


class InfeasibleTarget(ParamGateError, ValueError):
    """Requested coupling exceeds what the drive can deliver."""

    def __init__(self, message, feasible_max=None):
        super().__init__(message)
        self.feasible_max = feasible_max


class IntegrationError(ParamGateError, RuntimeError):
    """The ODE integrator failed; ``time`` is where it stopped."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class CompletenessError(ParamGateError, ValueError):
    pass


class UnderdeterminedError(ParamGateError, ValueError):
    pass


class DegenerateDistribution(ParamGateError, ValueError):
    pass


class NyquistError(ParamGateError, ValueError):
    pass


class DemodulationError(ParamGateError, RuntimeError):
    pass


class FilterError(ParamGateError, ValueError):
    pass


class ConfigError(ParamGateError, ValueError):
    """Config validation failure; ``path`` locates the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
