"""Exception taxonomy shared across the package.

CLI exit codes: ValidationError (and subclasses) -> 2, ProtocolError
(and subclasses) -> 3, PredictorTimeoutError -> 4.
"""


class SlidepromptError(Exception):
    """Base class for all package errors."""


class ValidationError(SlidepromptError):
    """Input violates a documented contract (bad values, grid mismatch, ...)."""


class FormatError(ValidationError):
    """Malformed file content (PGM/PFM headers, truncated payloads)."""


class ProtocolError(SlidepromptError):
    """Malformed or unexpected frame on the predictor wire protocol."""


class HandshakeError(ProtocolError):
    """Predictor endpoint advertised an incompatible protocol or version."""


class TransportError(ProtocolError):
    """Byte transport to the predictor failed (broken pipe, reset, ...). Retriable."""


class PredictorTimeoutError(SlidepromptError):
    """Predictor did not answer within the configured deadline."""
