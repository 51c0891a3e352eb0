"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid physical or numerical parameters."""


class ConvergenceError(RuntimeError):
    """A solver exhausted its budget without meeting its tolerance."""

    def __init__(self, message, *, last=None, time=None):
        super().__init__(message)
        self.last = last
        self.time = time


class StepSizeUnderflow(ConvergenceError):
    """Adaptive step shrank below the minimum allowed size."""


class BracketError(ConvergenceError):
    """A search interval does not contain the requested feature."""

    def __init__(self, message, *, scan=None):
        super().__init__(message)
        self.scan = scan or []


class FitError(ConvergenceError):
    """A least-squares fit did not reach the required quality."""


class OracleSizeError(ParameterError):
    """Requested exact simulation does not fit the configured budget."""
