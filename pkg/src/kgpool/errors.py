"""Exception types shared across the package."""


class KGPoolError(Exception):
    """Base class for errors raised by kgpool."""


class ConfigError(KGPoolError, ValueError):
    """Invalid configuration or incompatible dimensions."""


class ParseError(KGPoolError, ValueError):
    """Malformed input file; messages carry the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path


class EncodingError(KGPoolError, ValueError):
    """A sequence could not be encoded (for instance it is empty)."""


class CompatibilityError(KGPoolError):
    """A checkpoint does not match the data it is applied to."""
