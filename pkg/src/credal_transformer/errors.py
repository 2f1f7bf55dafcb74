"""Exception hierarchy for credal_transformer."""


class CredalError(Exception):
    """Base exception for all credal_transformer errors."""

    pass


class DimensionError(CredalError):
    """Operand shapes are incompatible."""

    pass


class ContractError(CredalError):
    """A documented precondition of an operation does not hold."""

    pass


class ConfigError(CredalError):
    """Invalid or inconsistent configuration."""

    pass


class InputError(CredalError):
    """Invalid input data (token out of range, bad label, ...)."""

    pass


class TrainingDivergedError(CredalError):
    """Loss or gradients became non-finite during training."""

    pass


class TimerResolutionError(CredalError):
    """Measured durations are too short for the clock to resolve reliably."""

    pass


class ReportError(CredalError):
    """Benchmark results cannot be paired into a comparison report."""

    pass


class StageError(CredalError):
    """Failure of one stage of a CLI pipeline."""

    def __init__(self, stage: str, cause: BaseException | str) -> None:
        """Initialize a stage-tagged error.

        Args:
            stage: Pipeline stage name (e.g. "train", "evaluate")
            cause: Underlying exception or message
        """
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
