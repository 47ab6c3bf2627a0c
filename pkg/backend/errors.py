from __future__ import annotations


class ToolkitError(Exception):
    """Base class for every error raised by the backend package."""


class DomainError(ToolkitError, ValueError):
    """An argument lies outside the domain of the operation."""


class SingularityError(ToolkitError, ArithmeticError):
    pass


class UnsupportedError(ToolkitError):
    """The request is well formed but not computable by this toolkit."""


class SizeError(ToolkitError):
    def __init__(self, message: str, cap: int):
        super().__init__(message)
        self.cap = cap


class PreconditionError(ToolkitError, ValueError):
    pass
