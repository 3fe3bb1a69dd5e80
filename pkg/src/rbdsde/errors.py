"""Exception hierarchy shared by the solver, the checks and the CLI."""


class InvalidInputError(ValueError):
    """Malformed or inconsistent input data."""


class StepSizeError(ValueError):
    """Time step too coarse for the requested model."""


class NumericalError(ArithmeticError):
    """Non-finite values or a degenerate linear system."""


class ConsistencyError(RuntimeError):
    """Internal bookkeeping disagrees with a recomputation."""


class AssumptionViolation(ValueError):
    """A positivity / structural assumption fails at some step."""


class DivergenceError(RuntimeError):
    """Fixed-point iteration did not converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class ConfigError(InvalidInputError):
    """Experiment configuration failed validation.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
