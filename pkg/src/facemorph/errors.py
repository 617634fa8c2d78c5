"""Exception hierarchy.

Three families map onto the CLI exit codes: configuration problems (2),
bad or inconsistent input data (3) and numerical failures (4).
"""


class FaceMorphError(Exception):
    exit_code = 1


class ConfigError(FaceMorphError, ValueError):
    exit_code = 2


class DataError(FaceMorphError, ValueError):
    exit_code = 3


class NumericError(FaceMorphError, ArithmeticError):
    exit_code = 4


# --- mesh / landmark I/O -------------------------------------------------

class PlyError(DataError):
    pass


class MalformedHeader(PlyError):
    pass


class UnsupportedFormat(PlyError):
    pass


class IndexOutOfRange(PlyError):
    pass


class TruncatedPayload(PlyError):
    pass


class IoFailure(DataError, OSError):
    pass


class LandmarkError(DataError):
    pass


class DuplicateName(LandmarkError):
    pass


class NonNumericCoordinate(LandmarkError):
    pass


class TooFewLandmarks(LandmarkError):
    pass


class NameMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InvalidMesh(DataError):
    pass


# --- geometry ------------------------------------------------------------

class EmptyPointSet(DataError):
    pass


class NoFaces(DataError):
    pass


class EmptyResult(DataError):
    pass


class DegenerateConfiguration(NumericError):
    pass


class DegenerateHull(NumericError):
    pass


class ZeroArea(NumericError):
    pass


class ZeroVariance(NumericError):
    pass


class CoincidentLandmarks(NumericError):
    pass


class ZeroDenominator(NumericError):
    pass


# --- statistics / grouping -----------------------------------------------

class GroupTooSmall(DataError):
    pass


class PairNameMismatch(DataError):
    pass


class UnknownLandmarkName(DataError):
    pass


class SubjectMismatch(DataError):
    pass


class MissingAlignmentLandmark(DataError):
    pass


class TooFewSubjects(DataError):
    pass


# --- warnings --------------------------------------------------------------

class RankDeficientWarning(UserWarning):
    """Rotation fit whose optimum is not unique."""


class NoConvergenceWarning(UserWarning):
    """GPA stopped at max_iter before reaching its tolerance."""
