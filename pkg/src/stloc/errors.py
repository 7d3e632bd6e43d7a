"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, annotations, shapes)."""


class InvariantError(RuntimeError):
    """An internal consistency check failed."""
