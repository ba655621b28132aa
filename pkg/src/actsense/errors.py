"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A linear solve failed or a precision matrix is too ill-conditioned."""


class DataFormatError(ValueError):
    """An input file violates the expected schema; message carries context."""
