"""
Domain errors raised by the learners and the game harness.
"""


class ScheduleViolation(ValueError):
    """A variance-budget schedule breaks monotonicity or positivity."""


class GameOver(RuntimeError):
    """A learner was asked to act after its final round."""


class BooleanProtocolError(ValueError):
    """A Boolean-only learner saw a non-integer running sum."""


class NumericalFault(ArithmeticError):
    """A quadrature or closed form produced a non-finite value."""


class GameFault(RuntimeError):
    """A learner or adversary failed inside a game; carries the round index."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {cause}")
        self.round_index = round_index
        self.cause = cause
