"""Exception types shared across the package."""


class Inv2InvError(Exception):
    """Base class for all package errors."""


class DomainError(Inv2InvError, ValueError):
    """A time or parameter lies outside the admissible domain."""


class ShapeError(Inv2InvError, ValueError):
    """Array shapes do not match the operation's contract."""


class NumericError(Inv2InvError, FloatingPointError):
    """NaN or infinite values appeared where finite ones are required."""


class SamplingError(NumericError):
    """A reverse trajectory produced non-finite values."""

    def __init__(self, stage: str, step: int):
        super().__init__(f"non-finite state in {stage} at step index {step}")
        self.stage = stage
        self.step = step


class TrainingError(NumericError):
    """Training diverged."""

    def __init__(self, iteration: int, loss: float):
        super().__init__(f"training diverged at iteration {iteration} (loss={loss})")
        self.iteration = iteration
        self.loss = loss


class ConfigError(Inv2InvError, ValueError):
    """Invalid configuration value, key or syntax."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(Inv2InvError, ValueError):
    """Malformed file content."""


class BadMagicError(FormatError):
    pass


class BadVersionError(FormatError):
    pass


class TruncatedError(FormatError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"truncated payload: expected {expected} bytes, got {actual}")
        self.expected = expected
        self.actual = actual
