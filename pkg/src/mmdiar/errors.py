"""Exception hierarchy shared by all modules.

``DataError`` subclasses signal bad input data (CLI exit code 2).
"""


class DataError(ValueError):
    """Base class for input-data problems."""

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class MalformedLine(DataError):
    pass


class NegativeDuration(DataError):
    pass


class NegativeTime(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class ZeroVector(DataError):
    pass


class EmptyInput(DataError):
    pass


class UnknownKindField(DataError):
    pass


class BadLabel(DataError):
    pass


class EmptyWords(DataError):
    pass


class DuplicateSegment(DataError):
    pass


class MissingClass(DataError):
    """A trial set lacks targets or nontargets."""


class DegenerateCohort(DataError):
    """Selected cohort scores have (near) zero spread."""


class IsolatedNode(DataError):
    """A graph node has zero degree, so D^-1/2 is undefined."""


class SingularSystem(DataError):
    pass


class EmptyReference(DataError):
    pass


class InfeasibleSeparation(DataError):
    pass


class EvidenceWithoutModality(UserWarning):
    """Evidence was supplied for a modality that is not enabled."""
