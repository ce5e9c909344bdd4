"""Exception hierarchy shared by all meshpush modules."""


class MeshPushError(Exception):
    """Base class for every error raised by this package."""


# mesh-core

class InvalidMesh(MeshPushError, ValueError):
    pass


class SubdivisionTooLarge(MeshPushError, ValueError):
    pass


class ParseError(MeshPushError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexOutOfRange(ParseError):
    pass


class EmptyMesh(MeshPushError, ValueError):
    pass


class IsolatedVertex(MeshPushError, ValueError):
    pass


class NonManifoldEdge(MeshPushError, ValueError):
    pass


# geometry

class ZeroDirection(MeshPushError, ValueError):
    pass


class DegenerateTriangle(MeshPushError, ValueError):
    pass


# lp

class TooLarge(MeshPushError, ValueError):
    pass


class SingularActiveSet(MeshPushError, ArithmeticError):
    pass


# pushing

class StepError(MeshPushError):
    """Base for failures of a single deformation step.

    ``step_index`` is filled in by :func:`meshpush.pushing.deform` when the
    step is part of a sequence.
    """

    step_index = None


class OrderingViolated(StepError):
    pass


class PushInfeasible(StepError):
    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


class VerificationFailed(StepError):
    pass


# fit

class ZeroAreaMesh(MeshPushError, ValueError):
    pass


class EmptyPointSet(MeshPushError, ValueError):
    pass


class NonFiniteLoss(MeshPushError, FloatingPointError):
    pass
