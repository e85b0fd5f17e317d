"""Exception types shared across the package."""


class SempcycError(Exception):
    """Base class for all package errors."""


class FormatError(SempcycError, ValueError):
    """A file or in-memory structure violates its format contract."""


class MissingTokenError(SempcycError, KeyError):
    """One or more tokens of a class name are absent from the word-vector table."""

    def __init__(self, class_name, tokens):
        self.class_name = class_name
        self.tokens = list(tokens)
        super().__init__(
            f"class {class_name!r}: tokens {self.tokens} not in word-vector table; "
            "add a remap for it to the alias file (e.g. 'jack-o-lantern<TAB>lantern')"
        )

    def __str__(self):
        return self.args[0]


class NumericError(SempcycError, FloatingPointError):
    """Non-finite values appeared in an input or a loss."""


class CheckpointError(SempcycError, ValueError):
    """A checkpoint file is corrupt or has an unsupported format version."""


class ConfigError(SempcycError, ValueError):
    """Invalid or inconsistent configuration."""


class MissingArtifactError(SempcycError, FileNotFoundError):
    """An upstream artifact needed by a pipeline stage does not exist."""
