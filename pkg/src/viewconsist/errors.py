"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives structurally invalid input."""


class InvalidStateError(RuntimeError):
    """Raised when an operation is called on an uninitialized or stale state."""
