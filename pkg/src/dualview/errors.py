"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes disagree; the message names the offending axis."""


class NumericError(ArithmeticError):
    """A value that must be finite is NaN or Inf."""


class StateError(RuntimeError):
    """An operation was called in the wrong order (e.g. backward before forward)."""


class ArchitectureError(ValueError):
    """A layer stack produces a non-positive spatial dimension somewhere."""


class GeometryError(ValueError):
    """A bounding box or polygon does not intersect the image."""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class SingleClassError(ValidationError):
    """A score set contains only one label class; ROC is undefined."""


class FormatError(ValueError):
    """A file on disk does not match its documented format."""


class CheckpointMismatchError(FormatError):
    """A checkpoint's architecture fingerprint differs from the expected one."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss; carries diagnostics."""

    def __init__(self, message, batch_index=None, loss_history=None):
        super().__init__(message)
        self.batch_index = batch_index
        self.loss_history = list(loss_history or [])
