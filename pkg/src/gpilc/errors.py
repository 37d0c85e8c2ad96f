"""Exception hierarchy shared by all modules."""


class GPILCError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(GPILCError, ValueError):
    pass


class NumericalError(GPILCError, ArithmeticError):
    pass


class RolloutError(NumericalError):
    """A model rollout produced a non-finite state."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class DegenerateModelError(NumericalError):
    """The learned model has a vanishing lifted Jacobian."""


class ActuationIneffectiveError(GPILCError):
    """Input excitation never rose above the noise floor."""


class DivergenceError(GPILCError):
    """A simulated plant state left the admissible region."""

    def __init__(self, message, sample=None, trial=None):
        super().__init__(message)
        self.sample = sample
        self.trial = trial


class GenerationFailedError(GPILCError):
    pass


class ConfigError(GPILCError, ValueError):
    pass


class ParseError(GPILCError, ValueError):
    def __init__(self, message, path=None, line=None, field=None):
        loc = ""
        if path is not None:
            loc += f"{path}"
        if line is not None:
            loc += f":{line}"
        if field is not None:
            loc += f" [{field}]"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.field = field


class NotFoundError(GPILCError, FileNotFoundError):
    """A campaign directory or file that should exist does not."""
