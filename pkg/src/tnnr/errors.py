"""Exception hierarchy. Every error raised on purpose by the package derives
from :class:`TnnrError`."""


class TnnrError(Exception):
    pass


class ConfigError(TnnrError, ValueError):
    """Invalid network, training or sweep configuration."""


class DimensionError(TnnrError, ValueError):
    """Array shapes do not fit the model."""


class InputError(TnnrError, ValueError):
    """Non-finite or otherwise unusable input values."""


class UsageError(TnnrError, RuntimeError):
    """An API was called out of order or with inconsistent state."""


class TrainingError(TnnrError, RuntimeError):
    """Training produced non-finite values."""


class LoadError(TnnrError, ValueError):
    """A dataset or model file could not be read."""


class SplitError(TnnrError, ValueError):
    pass


class SamplingError(TnnrError, ValueError):
    pass
