"""Exception types shared across the toolkit."""


class RepsimError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(RepsimError):
    """Operands have incompatible or invalid shapes."""


class SymmetryError(RepsimError):
    """A matrix required to be symmetric is not, within tolerance."""


class RankError(RepsimError):
    """A matrix required to be full rank is numerically singular."""


class InsufficientSamplesError(RepsimError):
    """Fewer samples than the operation needs (centering requires n >= 2)."""


class DegenerateFeaturesError(RepsimError):
    """Centered Gram matrix is numerically zero; CKA is undefined."""


class ConfigError(RepsimError):
    """Invalid or unknown configuration value."""


class NpyFormatError(RepsimError):
    """Array file does not conform to the supported NPY subset.

    The message names the offending field (magic, version, descr,
    fortran_order, shape, payload).
    """


class CheckpointError(RepsimError):
    """Checkpoint file is malformed or inconsistent with its manifest."""


class PretrainQualityError(RepsimError):
    """Pretraining failed to reach the required accuracy threshold."""


class TrainingDivergedError(RepsimError):
    """Loss became non-finite during training."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
