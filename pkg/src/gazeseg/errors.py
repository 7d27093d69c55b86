"""Exception types shared across the toolkit."""


class GazeSegError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(GazeSegError, ValueError):
    """A value or configuration violates a documented invariant."""


class ParseError(GazeSegError, ValueError):
    """A fixation file or config block could not be parsed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(GazeSegError, ValueError):
    """Array dimensions are incompatible with the requested operation."""
