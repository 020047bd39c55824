"""Exception types shared across the package."""


class SviaError(Exception):
    """Base class for all svia errors."""


class ValidationError(SviaError, ValueError):
    """An input violates a documented precondition or invariant."""


class NumericsError(SviaError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class DatasetError(SviaError):
    """A dataset directory is missing, malformed, or inconsistent."""


class TrainingError(SviaError):
    """Training aborted: diverging loss, NaNs, or bad configuration."""


class PipelineStageError(SviaError):
    """A pipeline stage failed; carries the stage name for diagnosis."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
