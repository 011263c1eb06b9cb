"""Error types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: impossible layout, bad parameter ranges, etc."""


class UsageError(RuntimeError):
    """API misuse: stepping a terminal episode, aggregating zero logs, etc."""


class CheckpointError(RuntimeError):
    """Checkpoint file is malformed or incompatible with the requested setup."""


class NumericalFault(FloatingPointError):
    """Non-finite value encountered in the network or the training loss."""
