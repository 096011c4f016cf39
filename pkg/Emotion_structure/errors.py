"""
Exceptions raised by Emotion_structure.

Input problems derive from ValueError and numerical failures from ArithmeticError,
so callers that only know the builtin types can still catch them.
"""


class EmotionStructureError(Exception):
    """Base class for every error raised by this package."""


class InputError(EmotionStructureError, ValueError):
    """A file, argument or data object violates its contract."""


class IngestError(InputError):
    """Rating data could not be loaded, aggregated or split."""


class ResponseParseError(InputError):
    """A model response could not be parsed into a rating vector."""

    def __init__(self, message: str, line_number: int | None = None, category: str | None = None):
        super().__init__(message)
        self.line_number = line_number
        self.category = category

    def __reduce__(self):
        return (self.__class__, (str(self), self.line_number, self.category))


class ConfigError(InputError):
    """The pipeline configuration is invalid."""


class NumericalError(EmotionStructureError, ArithmeticError):
    """A computation is undefined for the given data."""


class UndefinedCorrelationError(NumericalError):
    """Pearson correlation is undefined because one side has zero variance."""

    def __init__(self, message: str, side: str):
        super().__init__(message)
        self.side = side  # 'x', 'y' or 'both'

    def __reduce__(self):
        return (self.__class__, (str(self), self.side))


class ZeroRowError(NumericalError):
    """Cosine dissimilarity is undefined for all-zero rating vectors."""

    def __init__(self, stimulus_ids: list[str]):
        super().__init__('All-zero rating rows for stimuli: ' + ', '.join(stimulus_ids))
        self.stimulus_ids = stimulus_ids

    def __reduce__(self):
        return (self.__class__, (self.stimulus_ids,))


class SolverError(NumericalError):
    """The GW solver was called with an unusable problem."""


class StageError(EmotionStructureError):
    """A pipeline stage failed. The original exception is available as __cause__."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f'stage "{stage}" failed: {cause}')
        self.stage = stage
        self.cause = cause

    def __reduce__(self):
        return (self.__class__, (self.stage, self.cause))


class NullModelError(EmotionStructureError):
    """A metric failed on one shuffle of a null distribution."""

    def __init__(self, shuffle_index: int, cause: BaseException):
        super().__init__(f'metric failed on shuffle {shuffle_index}: {cause}')
        self.shuffle_index = shuffle_index
        self.cause = cause

    def __reduce__(self):
        return (self.__class__, (self.shuffle_index, self.cause))
