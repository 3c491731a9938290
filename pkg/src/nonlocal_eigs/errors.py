"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` for malformed input
(the CLI maps it to exit status 2) and ``NumericalError`` for failures
raised while computing (exit status 1).
"""


class NonlocalError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(NonlocalError, ValueError):
    """Input does not satisfy a documented precondition."""


class NumericalError(NonlocalError, RuntimeError):
    """A computation could not produce a trustworthy result."""

    stage = "numerics"


class NonSimpleEigenvalueError(NumericalError):
    stage = "eigenvalue selection"


class BandCollisionError(NumericalError):
    """The requested eigenvalue sits inside the essential band."""

    stage = "eigenvalue selection"


class BranchTrackingError(NumericalError):
    stage = "branch tracking"


class EigenvalueCrossingError(NumericalError):
    stage = "branch tracking"


class SolvabilityError(NumericalError):
    stage = "eigenfunction derivative"


class ConvergenceError(NumericalError):
    stage = "eigensolver"
