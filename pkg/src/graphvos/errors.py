"""Exception types shared across the package."""


class GraphVosError(Exception):
    """Base class for all errors raised by this package."""


class MissingFrames(GraphVosError):
    pass


class DimensionMismatch(GraphVosError):
    pass


class CorruptImage(GraphVosError):
    pass


class BadMagic(GraphVosError):
    pass


class TruncatedFile(GraphVosError):
    pass


class SizeMismatch(GraphVosError):
    pass


class IoFailure(GraphVosError):
    pass


class DegenerateInput(GraphVosError):
    pass


class FrameMismatch(GraphVosError):
    pass


class ShapeMismatch(GraphVosError):
    pass


class NonFiniteActivation(GraphVosError):
    pass


class NonFiniteLoss(GraphVosError):
    pass


class EmptyLabelSet(GraphVosError):
    pass


class EmptyScribble(GraphVosError):
    pass


class InsufficientData(GraphVosError):
    pass


class NotTrained(GraphVosError):
    pass


class SessionClosed(GraphVosError):
    pass


class MarkerConflict(GraphVosError):
    pass


class InvalidLabel(GraphVosError):
    pass


class NoGroundTruth(GraphVosError):
    pass


class NothingToAnnotate(GraphVosError):
    pass


class EmptyCurve(GraphVosError):
    pass


class NonMonotonicTime(GraphVosError):
    pass


class LogCorrupt(GraphVosError):
    pass
