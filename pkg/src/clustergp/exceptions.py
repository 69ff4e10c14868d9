"""Exception types raised across the package."""


class ClusterGpError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(ClusterGpError):
    """Matrix is not numerically positive definite.

    Usually means the nugget is too small or two input points coincide.
    """


class NonpositiveSchurComplement(ClusterGpError):
    """Appending a point produced a nonpositive Schur complement.

    The new point numerically duplicates an existing one.
    """


class SingletonSet(ClusterGpError):
    """Cannot remove a point from a one-point factorization."""


class TooFewPoints(ClusterGpError):
    """A GP fit needs at least two points."""


class EmptyClass(ClusterGpError):
    """A class label in 1..K has no observations."""


class KTooLarge(ClusterGpError):
    """More clusters requested than data points."""


class InfeasibleK(ClusterGpError):
    """Too few observations to support the requested number of clusters."""


class DegenerateCluster(ClusterGpError):
    """A cluster became too small to support a GP fit."""


class QOutOfRange(ClusterGpError):
    """Quantile level must lie strictly between 0 and 1."""


class DuplicatedPoints(ClusterGpError):
    """Training inputs contain duplicated rows."""


class ModelFormatError(ClusterGpError):
    """Model file is malformed or has an unsupported format version."""


class CsvFormatError(ClusterGpError):
    """CSV input is malformed; the message carries the offending line."""
