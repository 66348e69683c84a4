"""Exception hierarchy shared by every module."""


class MlfError(Exception):
    """Base class for all errors raised by mlfexplain."""


class DimensionError(MlfError, ValueError):
    """An input does not match the dimensions a component expects."""


class ValidationError(MlfError, ValueError):
    """A configuration or argument violates a documented precondition."""


class TrainingDivergedError(MlfError, ArithmeticError):
    """Training produced a non-finite loss."""


class ModelFormatError(MlfError, ValueError):
    """A model file cannot be decoded.

    ``layer`` names the offending layer when the problem is local to one.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedBlobError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class HierarchyError(MlfError, ValueError):
    """A segmentation hierarchy is malformed or does not fit an image."""


class SingularDesignError(MlfError, ArithmeticError):
    """A surrogate regression could not be fitted."""
