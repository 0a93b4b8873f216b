"""Exception hierarchy shared by all estimation and I/O routines."""


class ClarError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(ClarError, ValueError):
    """Caller-supplied data violates a documented precondition."""


class DegenerateDesign(InvalidInput):
    """Design matrix contains a zero row/column or is otherwise unusable."""


class NumericalFailure(ClarError, RuntimeError):
    """A numerical routine failed to converge or produced non-finite values."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InternalError(ClarError, RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
