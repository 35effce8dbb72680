"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not line up."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NonFiniteError(FloatingPointError):
    """An operation would have produced NaN or infinity."""


class ContractError(ValueError):
    """Caller violated a documented precondition."""


class ParseError(ValueError):
    """Malformed input file. Message carries the row/column location."""


class ModelFormatError(ValueError):
    """Model or checkpoint file failed validation. Message names the field."""


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss
