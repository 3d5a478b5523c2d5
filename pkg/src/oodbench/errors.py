"""Exception hierarchy shared across the package.

Every error raised by the library derives from :class:`OodbenchError` so
callers can catch one base class. The command-line layer maps subclasses
onto exit codes: validation problems exit 1, missing prerequisite
artifacts exit 2, anything else exits 3.
"""

__all__ = [
    "OodbenchError",
    "ValidationError",
    "IngestError",
    "SplitError",
    "MissingEmbeddingError",
    "UndefinedMetricError",
    "ModelFileError",
    "TrainingError",
    "PrerequisiteError",
    "ConfigError",
]


class OodbenchError(Exception):
    """Base class for all library errors."""


class ValidationError(OodbenchError):
    """An input violated a documented precondition or invariant."""


class IngestError(ValidationError):
    """A data file could not be parsed into valid records."""


class SplitError(ValidationError):
    """A split request was inconsistent with the dataset or manifest."""


class MissingEmbeddingError(ValidationError):
    """A record lacks an embedding required by the chosen scorer."""


class ConfigError(ValidationError):
    """A run configuration document failed schema validation."""


class UndefinedMetricError(OodbenchError):
    """A metric has no defined value for the given inputs."""


class ModelFileError(OodbenchError):
    """A scorer checkpoint is corrupt, truncated, or mislabeled."""


class TrainingError(OodbenchError):
    """Optimization failed, e.g. the loss became non-finite."""


class PrerequisiteError(OodbenchError):
    """A required artifact from an earlier pipeline stage is missing."""
