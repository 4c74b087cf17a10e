"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible (no implicit broadcasting)."""


class InvalidStateError(RuntimeError):
    """An object is not in the state an operation requires."""


class NonFiniteError(FloatingPointError):
    """A tensor holds NaN or Inf."""


class NumericalSingularityError(ArithmeticError):
    """A matrix that must be inverted is singular to working precision."""


class FormatError(ValueError):
    """A binary file does not follow its expected layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
