"""Exception types shared across the pipeline."""

from __future__ import annotations


class CurationError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(CurationError):
    """Config file could not be parsed. Carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(CurationError):
    """A value violates a documented invariant. Carries the field name."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class ManifestError(CurationError):
    """Manifest file is unreadable or malformed. Carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DecodeError(CurationError):
    """External decoder failed (nonzero exit or unusable output)."""


class FormatError(CurationError):
    """A FRAMESEQ or flow-grid stream violates its wire format."""


class SamplingError(CurationError):
    """A frame-sampling request cannot be satisfied."""


class ClientError(CurationError):
    """Base class for inference-client failures."""


class TransportError(ClientError):
    """The client could not reach the service or the call failed in transit."""


class UnparseableResponseError(ClientError):
    """The service answered, but the answer does not follow the contract."""


class ProtocolError(ClientError):
    """The service answered with a structurally invalid payload."""
