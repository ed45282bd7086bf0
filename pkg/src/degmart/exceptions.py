"""Exception types raised across the package."""


class DegmartError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(DegmartError, ValueError):
    """An argument is outside its documented domain."""


class ModelError(DegmartError):
    """A coefficient callback returned a malformed or non-finite value."""


class SimulationError(DegmartError, ArithmeticError):
    """A simulated quantity overflowed or became non-finite.

    Attributes
    ----------
    step : int or None
        Grid step at which the failure was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(DegmartError, ArithmeticError):
    """A linear solve could not be carried out (singular design, etc.)."""


class ConfigError(DegmartError, ValueError):
    """Malformed experiment configuration.

    Attributes
    ----------
    location : str or None
        Config key or ``line:column`` where the problem was found.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ResidualWarning(UserWarning):
    """A fitted representation leaves a large unexplained residual."""
