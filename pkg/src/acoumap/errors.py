"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A parameter violates an operation's precondition."""


class WindowingError(RuntimeError):
    """A delayed sample index falls outside the capture."""


class DegenerateRangeError(ValueError):
    """Min-max normalization was asked to scale a constant image."""


class SchemaError(ValueError):
    """A structured text file does not follow its documented schema."""
