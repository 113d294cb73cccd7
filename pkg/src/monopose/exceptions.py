"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
onto its documented status codes without inspecting messages.
"""


class MonoposeError(Exception):
    exit_code = 1


class SchemaError(MonoposeError, ValueError):
    """Malformed input document. ``path`` points at the offending field."""

    exit_code = 2

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(MonoposeError, ArithmeticError):
    exit_code = 3


class DegenerateInputError(MonoposeError, ValueError):
    exit_code = 4


class DepthTooSmall(DegenerateInputError):
    pass


class MissingJoint(DegenerateInputError):
    pass


class AllZeroHeatmap(DegenerateInputError):
    pass


class DegenerateScale(DegenerateInputError):
    pass


class NoVisibleJoints(DegenerateInputError):
    pass


class EmptyMatching(DegenerateInputError):
    pass


class NonFiniteActivation(NumericalError):
    pass


class DivergedLoss(NumericalError):
    pass


class NonFiniteResidual(NumericalError):
    pass


class StageError(MonoposeError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, error):
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", 1)
        super().__init__(f"[{stage}] {error}")
