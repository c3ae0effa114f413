"""Exception hierarchy shared across the package.

Validation-type errors (bad config, bad shapes, bad data) map to CLI exit
code 1; everything else that fails at run time maps to exit code 2.
"""


class StaError(Exception):
    """Base class for all package errors."""


class ValidationError(StaError, ValueError):
    """Input rejected before any work was done."""


class ConfigError(ValidationError):
    pass


class DimensionError(ValidationError):
    pass


class ContractError(ValidationError):
    pass


class DataError(ValidationError):
    pass


class SpecError(ValidationError):
    """A motion spec whose trajectory leaves the canvas."""


class CompatibilityError(ValidationError):
    """Checkpoint and dataset/config disagree."""


class TrainingError(StaError, RuntimeError):
    pass


class GradcheckError(StaError, RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FileError(StaError, RuntimeError):
    """Writing an artifact failed; the message names the path."""
