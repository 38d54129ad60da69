"""
Exception hierarchy shared by every package of the application.

Every failure raised by the numeric core, the data layer, the trainer or the
command line derives from FabuLightError so callers can catch a single type.
The concrete classes also inherit from the closest builtin exception, which
keeps ``except ValueError`` style handlers working.
"""


class FabuLightError(Exception):
    """Base class for all application errors."""


class DimensionError(FabuLightError, ValueError):
    """Tensor shapes do not agree for the requested operation."""


class AlignmentError(DimensionError):
    """Audio features are not aligned to four vectors per video frame."""


class ConfigurationError(FabuLightError, ValueError):
    """Architecture or run parameters are outside their allowed domain."""


class ScheduleError(FabuLightError, ValueError):
    """An epoch index lies outside the schedule's range."""


class EmptyInputError(FabuLightError, ValueError):
    """An operation received a sequence with no frames."""


class StateError(FabuLightError, RuntimeError):
    """A stateful component was used before it was initialised."""


class GraphError(FabuLightError, RuntimeError):
    """The recorded operation graph is malformed (e.g. contains a cycle)."""


class ContractError(FabuLightError, RuntimeError):
    """A caller broke an operation's precondition."""


class NumericError(FabuLightError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class DataError(FabuLightError, ValueError):
    """Input data is inconsistent with the configured model or format."""


class ParseError(DataError):
    """A text file could not be parsed; the message carries the location."""


class ValidationError(DataError):
    """Parsed data violates a documented invariant."""


class UndefinedMetricError(FabuLightError, ValueError):
    """A metric is undefined for the given input (e.g. no positives)."""


class WeightFileError(FabuLightError, IOError):
    """A weight file is truncated, corrupt or built for another architecture."""


class MediaError(FabuLightError, IOError):
    """A media file (face crop, pose track, audio) is missing or unreadable."""
