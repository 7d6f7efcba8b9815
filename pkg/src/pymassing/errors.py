class MassingError(Exception):
    """
    Base class of every error raised by pymassing.
    The exit_code is used by the command line to report the error category.
    """

    exit_code: int = 1


class DimensionError(MassingError, ValueError):
    exit_code = 4


class ConstraintError(MassingError, ValueError):
    exit_code = 4


class BoundsError(MassingError, IndexError):
    exit_code = 4


class EpisodeFinishedError(MassingError, RuntimeError):
    exit_code = 4


class PlanningError(MassingError, RuntimeError):
    exit_code = 4


class LengthError(MassingError, ValueError):
    exit_code = 4


class TrainingError(MassingError, RuntimeError):
    """
    Raised when a training loop diverges.
    """

    exit_code = 5

    epoch: int
    """
    The epoch in which the loss became non finite
    """

    def __init__(self, message: str, epoch: int) -> None:
        super().__init__(f"{message} (epoch {epoch})")
        self.epoch = epoch


class UsageError(MassingError, ValueError):
    exit_code = 2


class StatisticsError(MassingError, ValueError):
    exit_code = 4


class DomainError(MassingError, ValueError):
    exit_code = 4


class ConfigError(MassingError, ValueError):
    exit_code = 2


class StorageError(MassingError, OSError):
    exit_code = 3


class CheckpointError(StorageError):
    pass
