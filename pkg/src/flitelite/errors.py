"""Error types shared across the format, protocol, and tooling layers.

Every deliberate failure raises a FliteError subclass. Errors that can cross
the wire carry a numeric code; everything unexpected maps to Internal (4).
"""

ERR_NOT_FOUND = 1
ERR_MALFORMED = 2
ERR_QUERY = 3
ERR_INTERNAL = 4


class FliteError(Exception):
    wire_code = ERR_INTERNAL


class NotFound(FliteError):
    wire_code = ERR_NOT_FOUND


class Malformed(FliteError):
    wire_code = ERR_MALFORMED


class QueryError(FliteError):
    wire_code = ERR_QUERY

    def __init__(self, message, position=None, expected=None):
        super().__init__(message)
        self.position = position
        self.expected = frozenset(expected) if expected else frozenset()


class InternalError(FliteError):
    wire_code = ERR_INTERNAL


# Construction-time validation failures. They never travel, but if one leaks
# into a handler it reports as Malformed.
class TypeMismatch(Malformed):
    pass


class NullNotAllowed(Malformed):
    pass


class ShapeMismatch(Malformed):
    pass


class NullabilityMismatch(Malformed):
    pass


class IndexOutOfBounds(Malformed):
    pass


class NameTooLong(Malformed):
    pass


class TooManyFields(Malformed):
    pass


# Transport-layer failures.
class ConnectionClosed(FliteError):
    """Clean EOF at a frame boundary."""


class Truncated(Malformed):
    """EOF in the middle of a frame."""


class FrameTooLarge(Malformed):
    """Announced payload length exceeds the configured cap."""


class ProtocolViolation(Malformed):
    """Message out of sequence, or a preamble/shape violation."""


class ConnectFailed(FliteError):
    pass


class SchemaMismatch(FliteError):
    """Streams that must share a schema disagreed."""


_CODE_TO_ERROR = {
    ERR_NOT_FOUND: NotFound,
    ERR_MALFORMED: Malformed,
    ERR_QUERY: QueryError,
    ERR_INTERNAL: InternalError,
}


def error_from_code(code: int, message: str) -> FliteError:
    """Rebuild the local exception for an error received off the wire."""
    cls = _CODE_TO_ERROR.get(code, InternalError)
    return cls(message)
