"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: UsageError -> 1,
ValidationError (and FormatError) -> 2, NumericalError -> 3.
"""


class UsageError(Exception):
    """Bad command line or unknown configuration key."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class FormatError(ValidationError):
    """Malformed persisted file; message names the byte offset and field."""

    def __init__(self, message: str, *, offset: int | None = None, field: str | None = None):
        if offset is not None or field is not None:
            where = []
            if offset is not None:
                where.append(f"byte {offset}")
            if field is not None:
                where.append(f"field '{field}'")
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.offset = offset
        self.field = field


class NumericalError(RuntimeError):
    """Non-finite value encountered where finiteness is required."""
