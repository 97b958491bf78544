"""Exception hierarchy shared by every stage of the pipeline."""


class TamperWatchError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(TamperWatchError, ValueError):
    pass


class InvalidConfig(TamperWatchError, ValueError):
    pass


class NumericFailure(TamperWatchError, ArithmeticError):
    pass


class TrainingFailure(NumericFailure):
    """Loss became non-finite during training."""

    def __init__(self, message: str, epoch: int, window: int):
        super().__init__(f"{message} (epoch {epoch}, window {window})")
        self.epoch = epoch
        self.window = window


class IngestError(TamperWatchError, OSError):
    pass


class InternalConsistencyError(TamperWatchError, RuntimeError):
    pass
