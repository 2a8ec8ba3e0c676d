"""Exception types shared across the package."""


class LatticeMismatchError(ValueError):
    """Two fields (or a field and a background) live on different lattices."""


class PositivityError(ValueError):
    """A field that must be strictly positive is not."""


class PreconditionError(ValueError):
    """Input data violates the documented precondition of an operation."""


class UnsupportedError(NotImplementedError):
    """The operation is not defined for this kind of background."""


class ConvergenceError(RuntimeError):
    """An iterative method failed. ``report`` carries the last state, if any."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
