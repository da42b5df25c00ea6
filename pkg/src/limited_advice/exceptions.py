"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """A learner, game or experiment was configured with incompatible budgets."""


class RoundError(RuntimeError):
    """A learner produced an action that violates the game protocol.

    The offending :class:`~limited_advice.protocol.ActionViolation` is kept on
    ``violation`` so callers can inspect what went wrong.
    """

    def __init__(self, t, violation):
        super().__init__(f"round {t}: {violation}")
        self.t = t
        self.violation = violation


class EndOfSequence(IndexError):
    """A fixed-sequence adversary was asked for a round beyond its recording."""


class SequenceParseError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OutputPathError(OSError):
    """The experiment output location cannot be created or written."""
