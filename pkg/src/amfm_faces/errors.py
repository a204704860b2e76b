"""Exception hierarchy shared by every stage of the pipeline."""


class AmFmError(Exception):
    """Base class for all package errors."""


class ParameterError(AmFmError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(AmFmError):
    """A file could not be parsed.

    ``offset`` is the byte (or line) position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class EvaluationError(AmFmError, ValueError):
    """Metric undefined for the given labels (e.g. a single class)."""


class NumericalError(AmFmError, ArithmeticError):
    """Non-finite values appeared during training or inference."""
