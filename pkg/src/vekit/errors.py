"""Exception hierarchy shared across the toolkit."""


class VEKitError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(VEKitError, ValueError):
    """Tensor shapes incompatible with the requested operation."""


class DomainError(VEKitError, ValueError):
    """Input outside an operation's documented domain (e.g. empty softmax row)."""


class ContractError(VEKitError, ValueError):
    """A caller violated an operation's precondition."""


class ConfigError(VEKitError, ValueError):
    """Inconsistent or unsupported configuration."""


class FormatError(VEKitError, ValueError):
    """A binary file does not conform to its declared format."""


class CorruptionError(FormatError):
    """Payload truncated or inconsistent; carries the failing byte offset."""

    def __init__(self, message, byte_offset=None):
        super().__init__(message)
        self.byte_offset = byte_offset


class ParseError(VEKitError, ValueError):
    """A text record failed to parse; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class SchemaError(ParseError):
    """A parsed record is missing a required field."""


class ValidationError(VEKitError):
    """A dataset audit check failed."""


class MissingInputError(VEKitError):
    """A per-instance input (caption, feature file) is unavailable."""
