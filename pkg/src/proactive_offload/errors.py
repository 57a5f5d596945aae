"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class InsufficientHistoryError(ValidationError):
    """The demand window does not hold enough epochs for the request."""

    def __init__(self, needed: int, available: int, what: str = "epochs"):
        super().__init__(f"insufficient history: need {needed} {what}, have {available}")
        self.needed = needed
        self.available = available


class NonFiniteGradientError(ArithmeticError):
    def __init__(self, param: str):
        super().__init__(f"non-finite value while computing gradient of {param!r}")
        self.param = param


class TrainingDivergenceError(ArithmeticError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class WeightFormatError(ValueError):
    """Malformed weight file; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class TraceFormatError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{message}{where}")
        self.row = row


class ConfigError(ValueError):
    """Experiment configuration is invalid or incomplete."""
