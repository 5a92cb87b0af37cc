"""Exception types shared across the package.

Hard failures are raised. Soft failures (degeneracies, undecided rays,
incomplete loops) are raised by the low-level routines and caught and
counted by the pipeline, which keeps going and reports the tally.
"""

from collections import Counter


class CSGError(Exception):
    pass


class NonManifold(CSGError):
    pass


class OpenSurface(CSGError):
    pass


class DegenerateFacet(CSGError):
    pass


class ArityMismatch(CSGError, ValueError):
    pass


class SurfaceBitOutsideFlipSet(CSGError, ValueError):
    pass


class DegeneracyFlag(CSGError):
    pass


class IndicatorUndecided(CSGError):
    pass


class IncompleteLoop(CSGError):
    pass


class TesselationFailure(CSGError):
    pass


class MaxDepthExceeded(CSGError):
    pass


class OrientationUndecided(CSGError):
    pass


class DuplicateVertex(CSGError):
    pass


class SingularIntersection(CSGError):
    pass


class IndexOutOfRange(CSGError, IndexError):
    pass


class MeshSyntaxError(SyntaxError, CSGError):
    """Malformed mesh file. ``lineno`` is 1-based."""

    def __init__(self, msg, lineno):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class ExprSyntaxError(SyntaxError, CSGError):
    """Malformed boolean expression. ``pos`` is a 0-based character offset."""

    def __init__(self, msg, pos):
        super().__init__(f"at position {pos}: {msg}")
        self.pos = pos


SOFT_ERRORS = (
    DegeneracyFlag,
    IndicatorUndecided,
    IncompleteLoop,
    TesselationFailure,
    MaxDepthExceeded,
    OrientationUndecided,
    SingularIntersection,
)


def new_tally():
    """Per-task error counter, merged with ``+=``."""
    return Counter()


# OpenOutput: the assembled result has unbalanced edges
ERROR_NAMES = tuple(cls.__name__ for cls in SOFT_ERRORS) + ("OpenOutput",)


def error_total(tally):
    """Count of flagged errors; informational counters are ignored."""
    return sum(v for k, v in tally.items() if k in ERROR_NAMES)
