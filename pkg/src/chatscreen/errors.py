"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes: UsageError -> 1, DataFormatError -> 2,
NumericError -> 3.
"""


class ChatScreenError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ChatScreenError):
    """Caller violated a documented precondition."""


class ShapeError(UsageError):
    """Array dimensions do not agree; message names both shapes."""


class ConfigError(UsageError):
    """Bad configuration file, key, or directory layout."""


class DataFormatError(ChatScreenError):
    """An input file does not match its documented format."""


class CorpusParseError(DataFormatError):
    """Malformed corpus XML; message carries the byte offset."""


class ContainerFormatError(DataFormatError):
    """Model container with an unrecognized magic tag or manifest."""


class ContainerCorruptionError(DataFormatError):
    """Model container failed checksum or length validation."""


class ContainerVersionError(DataFormatError):
    """Model container written by a newer format version."""


class NumericError(ChatScreenError):
    """A computation produced a non-finite value."""
