"""Exception hierarchy shared by all modules."""


class CoevoError(Exception):
    """Base class for every error raised by this package."""


class DataError(CoevoError):
    """Problem with input data (CLI exit code 2)."""


class FormatError(DataError):
    pass


class OrderingError(DataError):
    pass


class DataValueError(DataError, ValueError):
    pass


class InsufficientDataError(DataError):
    pass


class SpecificationError(DataError):
    pass


class CoverageError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class DegenerateDataError(DataError):
    """Training data with a single class."""


class LearningEnvironmentError(DataError):
    pass


class ShapeError(CoevoError, ValueError):
    pass


class EncodingError(CoevoError, ValueError):
    pass


class RangeError(CoevoError, ValueError):
    pass


class RunFailure(CoevoError):
    """An MOEA run aborted (CLI exit code 3)."""
