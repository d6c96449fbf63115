"""Exception taxonomy shared by the library and the command line tool.

The split matters for the CLI exit codes: configuration problems and data
problems must be distinguishable without parsing messages.
"""


class EegDriveError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EegDriveError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(EegDriveError):
    """Malformed, missing or out-of-contract input data (exit code 3)."""


class TrainingDiverged(EegDriveError):
    """Numerical divergence during optimisation (exit code 4)."""
