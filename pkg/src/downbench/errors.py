"""Exception types shared across the package."""


class DownbenchError(Exception):
    """Base class for all errors raised by this package."""


class DecodeError(DownbenchError):
    """Malformed image stream; the message names the byte offset."""


class UnsupportedFormatError(DecodeError):
    """Recognized container, but a feature we do not support (bit depth, interlace, ...)."""


class DimensionError(DownbenchError, ValueError):
    """Image shapes incompatible with the requested operation."""


class InvalidScaleError(DownbenchError, ValueError):
    """Scale factor unusable for the given image."""


class InvalidArgumentError(DownbenchError, ValueError):
    """Argument outside the documented domain."""


class UndefinedCorrelationError(InvalidArgumentError):
    """Rank correlation undefined (a constant list has no ranking)."""


class ConfigError(DownbenchError):
    """Run configuration invalid or not resolvable."""


class ProtocolError(DownbenchError):
    """Corrupt or out-of-contract frame on the backend wire protocol."""


class BackendError(DownbenchError):
    """Backend unreachable or misbehaving; carries endpoint and message kind."""

    def __init__(self, message, endpoint=None, kind=None):
        super().__init__(message)
        self.endpoint = endpoint
        self.kind = kind


class PluginError(DownbenchError):
    """External downscaler process failed; carries exit code and captured stderr."""

    def __init__(self, message, returncode=None, stderr=None):
        super().__init__(message)
        self.returncode = returncode
        self.stderr = stderr
