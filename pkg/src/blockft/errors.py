"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition."""


class ConfigurationError(ValidationError):
    """Raised when a model or training configuration is not buildable."""


class ShapeMismatchError(ValidationError):
    """Raised when tensors or checkpoints have incompatible shapes."""


class DegenerateInputError(ValidationError):
    """Raised when a statistical test receives an input with no information
    (e.g. all-zero differences)."""


class DivergedRunError(RuntimeError):
    """Raised when a training loss becomes non-finite.

    Carries the epoch index at which divergence was detected.
    """

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
