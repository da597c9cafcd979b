"""Exception types shared across the package.

Each exception carries a stable ``category`` string; the CLI prints it on a
single stderr line so scripted callers can classify failures without parsing
prose.
"""


class SemstreamError(Exception):
    category = "internal"


class DimensionError(SemstreamError):
    """Shapes of two operands (or a config and a tensor) do not agree."""

    category = "dimension"


class ParameterError(SemstreamError):
    """An argument value is outside its documented domain."""

    category = "parameter"


class VocabularyError(SemstreamError):
    """A token id or symbol is not part of the active vocabulary."""

    category = "vocabulary"


class FormatError(SemstreamError):
    """A binary or text file does not match its declared on-disk format."""

    category = "format"


class StateError(SemstreamError):
    """An operation was called on an object in the wrong lifecycle state."""

    category = "state"


class ConfigError(SemstreamError):
    """A config file or override contains an unknown key or a bad value."""

    category = "config"


class DataError(SemstreamError):
    """Dataset records are missing or inconsistent."""

    category = "data"


class NonFiniteLossError(SemstreamError):
    """Training produced a NaN/inf loss; names the first offending tensor."""

    category = "non-finite-loss"

    def __init__(self, message, tensor_name=None):
        super().__init__(message)
        self.tensor_name = tensor_name
