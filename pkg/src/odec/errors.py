"""Exception hierarchy shared across the package."""


class OdecError(Exception):
    """Base class for all package errors."""


class DimensionError(OdecError, ValueError):
    """Array shapes do not line up."""


class NonFiniteError(OdecError, ValueError):
    """An input matrix contains NaN or infinite entries."""


class RankError(OdecError, ValueError):
    """A requested dimension exceeds the available rank."""


class DegeneracyError(OdecError, ArithmeticError):
    """An interpolation system is singular or too badly conditioned to solve.

    Raised by the DEIM point selection when ``P^T U`` cannot be inverted.
    ``iteration`` holds the 1-based greedy step at which it happened, if known.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DivergenceError(OdecError, ArithmeticError):
    """The ODE state blew up during integration."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class TrainingDivergenceError(OdecError, ArithmeticError):
    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch


class FormatError(OdecError, ValueError):
    """A file could not be decoded."""


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class SchemaVersionError(FormatError):
    pass
