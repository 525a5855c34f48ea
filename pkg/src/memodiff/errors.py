"""Exception types raised across memodiff.

The CLI maps these onto exit codes, so keep the hierarchy shallow.
"""


class MemodiffError(Exception):
    """Base class for all package errors."""


class InvalidArgument(MemodiffError, ValueError):
    pass


class ExprError(MemodiffError, ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class EvaluationError(ExprError):
    pass


class UnsupportedProfile(MemodiffError):
    pass


class HypothesisViolated(MemodiffError):
    """A structural assumption on the parameters does not hold.

    ``condition`` names the failing inequality, e.g. ``"(H1) r1 - r2 > 0"``.
    """

    def __init__(self, condition, detail=""):
        msg = f"hypothesis violated: {condition}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.condition = condition


class AssumptionViolated(HypothesisViolated):
    pass


class OutOfRange(HypothesisViolated):
    pass


class DegenerateProfile(MemodiffError):
    pass


class SolverFailure(MemodiffError):
    pass


class PositivityFailure(SolverFailure):
    pass


class InstabilityDetected(SolverFailure):
    def __init__(self, t, message="solution blew up"):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class Refused(MemodiffError):
    pass


class ConfigError(MemodiffError):
    pass
