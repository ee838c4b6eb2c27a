"""Exception types shared across the package."""


class RandCarlesonError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RandCarlesonError, ValueError):
    """Arguments violate a documented precondition."""


class ResourceLimitError(RandCarlesonError):
    """A configured size cap would be exceeded."""

    def __init__(self, what: str, requested: int, cap: int):
        self.what = what
        self.requested = requested
        self.cap = cap
        super().__init__(f"{what}: requested {requested} exceeds cap {cap}")


class NumericError(RandCarlesonError, ArithmeticError):
    """An iterative computation failed to reach its tolerance."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)
