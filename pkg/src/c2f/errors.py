"""Exception hierarchy shared by all c2f modules."""


class C2fError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(C2fError):
    """A caller broke a documented precondition (shape, range, mode)."""


class NumericError(C2fError):
    """A forward or backward pass produced a non-finite value."""


class CorruptStreamError(C2fError):
    """An entropy-coded stream ended early or does not match its tables."""


class FormatError(C2fError):
    """A serialized file is malformed."""


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ModelIdMismatchError(FormatError):
    """A bitstream was produced by different weights than those supplied."""


class ConfigError(C2fError):
    """Invalid training or reporting configuration."""


class EvaluationError(C2fError):
    """A metric or BD-rate computation cannot proceed on the given inputs."""
