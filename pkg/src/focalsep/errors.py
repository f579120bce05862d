"""Exception and warning types shared across the library."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class ConfigError(ValueError):
    """A configuration value is out of its legal range."""


class ContractError(ValueError):
    """An operation was called outside its documented contract."""


class NumericError(ArithmeticError):
    """A computation produced or encountered non-finite values."""


class ShortInputError(ValueError):
    """An input signal is too short for the requested framing."""


class UndefinedReferenceError(ValueError):
    """A metric reference signal is identically zero."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


class DegenerateRowWarning(RuntimeWarning):
    """Linear attention zeroed output rows whose denominator underflowed."""
