"""Exception hierarchy shared by all pipeline stages."""


class DynamicsError(Exception):
    """Base class for every error raised by this package."""


class FormatError(DynamicsError):
    """A file does not match its declared binary or text layout."""


class TruncationError(FormatError):
    """A file header promises more payload than the file contains."""


class IntegrityError(DynamicsError):
    """Data violates an internal consistency contract (ids, counts, lineage)."""


class ConfigError(DynamicsError):
    """A parameter is outside its documented range or incompatible with the input."""


class DegenerateVectorError(DynamicsError):
    """An embedding row has zero norm and cannot live on the unit sphere."""

    def __init__(self, sample_id: int):
        self.sample_id = int(sample_id)
        super().__init__(f"zero-norm embedding for sample id {self.sample_id}")


class GenerationError(DynamicsError):
    """Synthetic data generation could not satisfy its separation constraints."""


class IoError(DynamicsError):
    """An artifact could not be written or read back."""
