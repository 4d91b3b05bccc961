"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: config problems -> 2, numeric failures
during training -> 3, transport/stream failures -> 4.
"""


class StreamCLError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(StreamCLError):
    """Invalid configuration value, unknown config key, or bad checkpoint manifest."""


class ProtocolError(StreamCLError):
    """Malformed wire data or a violated scheduler contract."""


class IncompleteMessageError(ProtocolError):
    """Buffer ends mid-message; the caller may wait for more bytes."""


class SchedulerOverflowError(ProtocolError):
    """A frame was pushed while the cache was already full."""


class EmptyCacheError(ProtocolError):
    """Drain was requested on an empty cache."""


class TransportError(StreamCLError):
    """Transport failed (closed socket, broken pipe, handshake failure)."""


class StreamAbortedError(TransportError):
    """The stream terminated before END was delivered."""


class NumericFailureError(StreamCLError):
    """Non-finite loss or gradient encountered during training."""
