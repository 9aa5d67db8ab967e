"""Exception hierarchy.

Two families: :class:`ConfigError` for bad parameters supplied by the caller
and :class:`DataError` for inputs whose content is invalid. The CLI maps them
to exit codes 2 and 3 respectively.
"""


class MeanQuantError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(MeanQuantError, ValueError):
    pass


class DataError(MeanQuantError, ValueError):
    pass


class DimensionMismatch(DataError):
    pass


class NonPositiveWeight(DataError):
    pass


class PointOutsideBall(DataError):
    pass


class EmptySupport(DataError):
    pass


class EmptySample(DataError):
    pass


class MassMismatch(DataError):
    pass


class UnsupportedInstance(DataError):
    pass


class MissingLabels(DataError):
    pass


class TooLarge(DataError):
    pass


class LengthMismatch(DataError):
    pass


class NegativeArgument(DataError):
    pass


class BatchTooSmall(ConfigError):
    pass


class BadThreshold(ConfigError):
    pass


class SpecInvalid(ConfigError):
    pass
