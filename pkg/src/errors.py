# src/errors.py
# Exception hierarchy shared by every module of the toolkit.
# Value-like failures also derive from ValueError, runtime failures from RuntimeError,
# so callers that only know the builtin exceptions can still catch them.


class RfExtraError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RfExtraError, ValueError):
    """A matrix argument has the wrong shape."""


class ParameterError(RfExtraError, ValueError):
    """A scalar or structural parameter is outside its admissible range."""


class SingularityError(RfExtraError, ValueError):
    """A matrix that must have full column rank does not."""


class PreconditionError(RfExtraError, ValueError):
    """An operation was called on an input that violates its precondition."""


class FormatError(RfExtraError, ValueError):
    """An input file does not follow its expected binary or text layout."""


class ConfigError(RfExtraError, ValueError):
    """An experiment configuration is invalid.

    Attributes:
        key (str): The offending `section.key`, when one can be named.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class NumericalError(RfExtraError, RuntimeError):
    """A numerical routine failed to produce a usable result."""


class DivergenceError(NumericalError):
    """An iteration produced non-finite or exploding blocks.

    Attributes:
        iteration (int): Index of the iterate that tripped the guard.
    """

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class GenerationError(RfExtraError, RuntimeError):
    """A random generator could not produce an admissible instance."""


class OutputError(RfExtraError, OSError):
    """Writing an artifact failed.

    Attributes:
        path (str): The destination that could not be written.
    """

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path
