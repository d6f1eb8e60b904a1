"""Exception hierarchy.

Everything raised for bad input derives from :class:`ValidationError`, which the
CLI maps to exit code 2. Failures that happen while fitting a model derive from
:class:`TrainingError` (exit code 1).
"""


class FilmError(Exception):
    pass


class ValidationError(FilmError, ValueError):
    pass


class TrainingError(FilmError, RuntimeError):
    pass


# dataset
class MissingTargetColumn(ValidationError):
    pass


class NotBinaryTarget(ValidationError):
    pass


class EmptyAfterCleaning(ValidationError):
    pass


class InvalidDataset(ValidationError):
    pass


class ClassTooSmall(ValidationError):
    pass


class UnreachableProportion(ValidationError):
    pass


class NotImbalanced(ValidationError):
    pass


class BadN(ValidationError):
    pass


# metrics
class LengthMismatch(ValidationError):
    pass


class OneClassOnly(ValidationError):
    pass


class NoPositives(ValidationError):
    pass


# learners
class WidthMismatch(ValidationError):
    pass


class DegenerateData(TrainingError):
    pass


class SingularFit(TrainingError):
    pass


# resampling
class TooFewMinority(ValidationError):
    pass


class BadCounts(ValidationError):
    pass


# uic
class TooFew(ValidationError):
    pass


class IncompleteGrid(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


# concordance
class IncompleteRecords(ValidationError):
    pass
