"""Exception hierarchy shared by all lanlab modules."""


class LanlabError(Exception):
    """Base class for every error raised by lanlab."""


class InvalidSpec(LanlabError, ValueError):
    """A model specification violates its own invariants."""


class ConditionHViolation(LanlabError):
    """The Levy measure fails one of the H(i)-H(iv) checks.

    Parameters
    ----------
    part : str
        Which sub-condition failed, e.g. ``"i"`` or ``"ii"``.
    detail : str
        Human readable description.
    """

    def __init__(self, part, detail=""):
        self.part = part
        super().__init__(f"condition H({part}) violated: {detail}")


class ConditionAViolation(LanlabError):
    """The drift family fails a condition-A check at ``(x, theta)``."""

    def __init__(self, part, x, theta, detail=""):
        self.part = part
        self.x = x
        self.theta = theta
        super().__init__(f"condition A({part}) violated at x={x!r}, theta={theta!r}: {detail}")


class NumericalBlowup(LanlabError):
    """A simulated state became non-finite."""

    def __init__(self, time):
        self.time = time
        super().__init__(f"non-finite state at t={time!r}")


class InvalidScheme(LanlabError, ValueError):
    """An observation scheme is incompatible with the simulated path."""


class ScoreUndefined(LanlabError):
    """The transition density vanishes where a score is requested."""

    def __init__(self, y=None, detail=""):
        self.y = y
        super().__init__(f"score undefined at y={y!r}" + (f": {detail}" if detail else ""))


class LikelihoodUndefined(LanlabError):
    """A likelihood ratio involves a zero density."""


class NoUniqueInvariant(LanlabError):
    """A finite chain is reducible or periodic at the requested parameter."""


class NonpositiveFisher(LanlabError):
    """The Fisher information is not strictly positive."""


class ConfigError(LanlabError, ValueError):
    """An experiment configuration is malformed or out of range.

    ``line``/``column`` locate JSON syntax errors; ``path`` locates schema errors.
    """

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        super().__init__(message)
