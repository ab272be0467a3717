"""Exception types shared across the package."""


class ZslensError(Exception):
    """Base class for domain errors raised by zslens."""


class DataFormatError(ZslensError):
    """A dataset directory or file is missing, truncated, or malformed."""


class CheckpointError(ZslensError):
    """A model checkpoint file is missing, truncated, or malformed."""


class TrainingDiverged(ZslensError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class ProjectionDiverged(ZslensError):
    """The 2D embedding produced a non-finite KL divergence."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite KL divergence at iteration {iteration}")
