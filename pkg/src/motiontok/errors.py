"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, validation/state
errors exit 3, I/O errors exit 4.
"""


class MotionTokError(Exception):
    """Base class for all package errors."""


class InvalidArgument(MotionTokError, ValueError):
    """An argument violates a documented precondition."""


class InvalidState(MotionTokError, RuntimeError):
    """An object is not in a state that permits the operation."""


class SchemaError(MotionTokError, ValueError):
    """A structured input is missing required keys or has the wrong shape."""


class ValidationError(MotionTokError, ValueError):
    """Data is structurally well-formed but violates an invariant."""
