"""Exception types raised by the betaplane package."""


class ValidationError(ValueError):
    """Invalid input parameters or a violated structural invariant."""


class DegenerateSystemError(ValidationError):
    """Raised when Lambda2 + 2*Omega vanishes and the characteristic system collapses."""


class IntegrationError(RuntimeError):
    """Characteristic integration produced a non-finite state.

    ``last_state`` holds the last finite (s, x, y, z) sample.
    """

    def __init__(self, message, last_state):
        super().__init__(message)
        self.last_state = last_state


class EvaluationError(RuntimeError):
    """A field could not be evaluated (or returned non-finite values) at a grid point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
