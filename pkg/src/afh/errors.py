"""Exception types shared across the package."""


class AfhError(Exception):
    """Base class for all errors raised by this package."""


class LocationError(AfhError):
    """A patch location falls outside the host image bounds."""


class GeometryError(AfhError):
    """Invalid patch geometry or mismatched image/patch dimensions."""


class ShapeError(AfhError):
    """Tensor or image shape does not match the configured network."""


class CheckpointError(AfhError):
    """Checkpoint file is missing, corrupt, or inconsistent with the configs."""


class ConfigError(AfhError):
    """A run configuration failed validation; message names the field."""


class DataError(AfhError):
    """Dataset directory, split file, or image file is unusable."""


class TrainingDiverged(AfhError):
    """A loss or reward became non-finite during optimization."""
