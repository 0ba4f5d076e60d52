import numpy as np


class DpmvsError(Exception):
    """Base class for errors raised by dpmvs."""


class DomainError(DpmvsError, ValueError):
    """A distribution or special function was called outside its domain."""


class NotPositiveDefiniteError(DpmvsError, np.linalg.LinAlgError):
    """A matrix could not be factored even after jitter was added."""


class DataValidationError(DpmvsError, ValueError):
    """Input data, schema or configuration failed validation."""


class SampleFileError(DpmvsError):
    """A sample file is missing, empty or cannot be parsed."""
