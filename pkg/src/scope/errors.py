"""Exception hierarchy shared across the package."""
from __future__ import annotations


class ScopeError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ScopeError, ValueError):
    """Grid is empty/ragged, or two rasters disagree on width/height."""


class MaskCorruptionError(ScopeError, ValueError):
    """RLE payload inconsistent with the declared mask dimensions."""


class EmptyInputError(ScopeError, ValueError):
    """An operation that requires at least one element got none."""


class UndefinedMetricError(ScopeError):
    """Metric has no defined value for this input (e.g. ASD of an empty mask)."""


class DegenerateMaskError(ScopeError):
    """Mask has too few foreground pixels for a stable orientation estimate."""


class NoContactError(ScopeError):
    """Tip and shaft boundaries never come within matching tolerance."""


class TrackingLostError(ScopeError):
    """Landmark has been held stale for more frames than the staleness budget."""


class ConfigurationError(ScopeError, ValueError):
    """Invalid or incomplete configuration."""


class ResponseFormatError(ScopeError):
    """Backend reply does not conform to the structured response wire format."""


class PolicyViolationError(ScopeError):
    """Proposed tool call is not allowed in the current workflow module."""


class BackendError(ScopeError):
    """Base class for model-backend failures."""

    retryable: bool = False


class BackendTimeoutError(BackendError):
    """Backend did not answer within its timeout budget."""

    retryable = True


class BackendUnavailableError(BackendError):
    """Backend unreachable, or every prompt in a fan-out failed."""

    retryable = True


class ProtocolError(BackendError):
    """Request or response violates the backend wire protocol."""


class FrameRangeError(ScopeError, IndexError):
    """Frame index outside the available range."""


class OrderingError(ScopeError):
    """Event appended out of order."""


class ScriptError(ScopeError, ValueError):
    """Session script is malformed or references frames beyond the source."""
