"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI: usage/config problems -> 2,
data problems -> 3, numerical failures -> 4.
"""


class VmdcastError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(VmdcastError):
    """Invalid configuration value or unusable run config."""


class DataError(VmdcastError):
    """Base class for problems with input data."""


class LoadError(DataError):
    """CSV could not be parsed into a valid price series."""


class InsufficientDataError(DataError):
    """Series too short for the requested operation."""


class DegenerateFeatureError(DataError):
    """A feature column has zero variance and cannot be scaled."""


class AlignmentError(DataError):
    """Parallel arrays disagree in length or dates."""


class DiagnosticError(DataError):
    """Statistical test cannot be run on the given series."""


class ComparisonError(DataError):
    """Two reports do not cover the same sample set."""


class NumericalError(VmdcastError):
    """Base class for numerical failures."""


class TrainingDivergedError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
