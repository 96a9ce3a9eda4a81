"""Exception types shared across the package."""


class ClinkerscopeError(Exception):
    """Base class for all package errors."""


class DataError(ClinkerscopeError):
    """Bad input data: unreadable files, malformed documents, invalid values."""


class IterationCapError(ClinkerscopeError):
    """A bounded iterative procedure hit its cap without converging."""
