"""Shared exception types. Config errors map to CLI exit code 2, numeric failures to 3."""


class TaskmixError(Exception):
    pass


class ConfigError(TaskmixError):
    """Invalid run/pretrain configuration or malformed input file."""


class NumericError(TaskmixError):
    """Non-finite value encountered in training or likelihood arithmetic."""


class CheckpointError(TaskmixError):
    """Malformed, truncated, or incompatible checkpoint data."""
