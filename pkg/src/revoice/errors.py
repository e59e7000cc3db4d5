"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A parameter or config value is outside its documented range."""


class SignalTooShortError(ValueError):
    """The input signal is too short for the requested analysis."""


class MismatchError(ValueError):
    """Two inputs that must agree (shape, rate, config) do not."""


class CheckpointError(RuntimeError):
    """A checkpoint is missing, corrupt, or was produced by another config."""
