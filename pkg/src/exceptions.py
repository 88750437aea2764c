"""Custom exceptions for bagshrink."""


class BagShrinkError(Exception):
    """Base exception for bagshrink errors."""

    pass


class ConfigurationError(BagShrinkError):
    """Raised when there's a configuration error."""

    pass


class InvalidParameterError(BagShrinkError):
    """Raised when a numeric parameter is outside its admissible range."""

    pass


class DimensionMismatchError(BagShrinkError):
    """Raised when bags, vectors or matrices have incompatible shapes."""

    pass


class BagTooSmallError(BagShrinkError):
    """Raised when a bag has fewer samples than an operation needs."""

    pass


class DegenerateShrinkageError(BagShrinkError):
    """Raised when a shrinkage intensity cannot be computed (e.g. lambda = -1)."""

    pass


class SingularSystemError(BagShrinkError):
    """Raised when the multi-task averaging system cannot be solved."""

    pass


class DataFormatError(BagShrinkError):
    """Raised when bag data on disk is malformed or unusable."""

    pass


class UnsupportedCheckError(BagShrinkError):
    """Raised for a concentration check kind/params combination we cannot simulate."""

    pass
