"""Protocol-level payloads and the legal-sequence validator.

Connections open with a 5-byte preamble (magic "FLTL" plus a version byte)
sent by the client and echoed by the server. Each connection then carries
exactly one command. SessionValidator replays a recorded transcript of
(sender, message) pairs and rejects anything a correct peer could not have
produced: wrong direction, wrong order, or an undecodable payload for the
position it appears in.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional, Sequence, Tuple
from urllib.parse import urlsplit

from .columnar import BufferLike, Schema, batch_byte_size
from .errors import Malformed, ProtocolViolation
from .ipc import (
    MsgType,
    WireMessage,
    decode_batch,
    decode_error,
    decode_schema,
)

MAGIC = b"FLTL"
PROTOCOL_VERSION = 1
PREAMBLE = MAGIC + bytes([PROTOCOL_VERSION])

LOCATION_SCHEME = "fltl"


class DescriptorKind(IntEnum):
    PATH = 0
    CMD = 1


def parse_location(uri: str) -> Tuple[str, int]:
    """Split a "fltl://host:port" location, raising Malformed when it isn't one."""
    try:
        parts = urlsplit(uri)
        host = parts.hostname
        port = parts.port
    except ValueError as exc:
        raise Malformed(f"bad location {uri!r}: {exc}") from None
    if parts.scheme != LOCATION_SCHEME or not host or port is None:
        raise Malformed(f"bad location {uri!r}")
    if parts.path or parts.query or parts.fragment:
        raise Malformed(f"location {uri!r} has trailing components")
    return host, port


def format_location(host: str, port: int) -> str:
    if ":" in host:  # bare IPv6 addresses need brackets
        return f"{LOCATION_SCHEME}://[{host}]:{port}"
    return f"{LOCATION_SCHEME}://{host}:{port}"


@dataclass(frozen=True)
class FlightDescriptor:
    kind: DescriptorKind
    path: tuple = ()
    cmd: bytes = b""

    def __post_init__(self):
        if self.kind == DescriptorKind.PATH:
            if not self.path or any(not seg for seg in self.path):
                raise ValueError("path descriptor needs non-empty segments")
            if self.cmd:
                raise ValueError("path descriptor cannot carry cmd bytes")
        elif self.kind == DescriptorKind.CMD:
            if not self.cmd:
                raise ValueError("cmd descriptor needs non-empty bytes")
            if self.path:
                raise ValueError("cmd descriptor cannot carry path segments")
        else:
            raise ValueError(f"unknown descriptor kind {self.kind!r}")

    @classmethod
    def for_path(cls, *segments: str) -> "FlightDescriptor":
        return cls(DescriptorKind.PATH, path=tuple(segments))

    @classmethod
    def for_command(cls, cmd) -> "FlightDescriptor":
        if isinstance(cmd, str):
            cmd = cmd.encode("utf-8")
        return cls(DescriptorKind.CMD, cmd=bytes(cmd))


@dataclass(frozen=True)
class Ticket:
    value: bytes

    def __post_init__(self):
        if not self.value:
            raise ValueError("ticket must be non-empty")

    @classmethod
    def for_text(cls, text: str) -> "Ticket":
        return cls(text.encode("utf-8"))


@dataclass(frozen=True)
class Endpoint:
    ticket: Ticket
    locations: tuple

    def __post_init__(self):
        if not self.locations:
            raise ValueError("endpoint needs at least one location")
        for loc in self.locations:
            parse_location(loc)


@dataclass(frozen=True)
class FlightInfo:
    schema_bytes: bytes
    endpoints: tuple
    total_records: int
    total_bytes: int

    def __post_init__(self):
        if not self.endpoints:
            raise ValueError("flight info needs at least one endpoint")
        if self.total_records < -1 or self.total_bytes < -1:
            raise ValueError("totals must be >= -1 (-1 meaning unknown)")
        decode_schema(self.schema_bytes)  # must decode; raises Malformed

    @property
    def schema(self) -> Schema:
        return decode_schema(self.schema_bytes)


@dataclass(frozen=True)
class PutResult:
    records_received: int
    bytes_received: int

    def __post_init__(self):
        if self.records_received < 0 or self.bytes_received < 0:
            raise ValueError("put result counts must be >= 0")


def encode_descriptor(d: FlightDescriptor) -> bytes:
    if d.kind == DescriptorKind.PATH:
        if len(d.path) > 0xFFFF:
            raise Malformed("too many path segments")
        parts = [struct.pack("<BH", DescriptorKind.PATH, len(d.path))]
        for seg in d.path:
            raw = seg.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise Malformed("path segment too long")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
        return b"".join(parts)
    if len(d.cmd) > 0xFFFFFFFF:
        raise Malformed("cmd too long")
    return struct.pack("<BI", DescriptorKind.CMD, len(d.cmd)) + d.cmd


def decode_descriptor(data: BufferLike) -> FlightDescriptor:
    data = bytes(data)
    if not data:
        raise Malformed("empty descriptor payload")
    kind = data[0]
    if kind == DescriptorKind.PATH:
        try:
            (count,) = struct.unpack_from("<H", data, 1)
        except struct.error:
            raise Malformed("descriptor truncated before segment count") from None
        pos = 3
        segments = []
        for i in range(count):
            try:
                (seg_len,) = struct.unpack_from("<H", data, pos)
            except struct.error:
                raise Malformed(f"descriptor truncated in segment {i}") from None
            pos += 2
            raw = data[pos : pos + seg_len]
            if len(raw) != seg_len:
                raise Malformed(f"descriptor truncated in segment {i}")
            pos += seg_len
            try:
                segments.append(raw.decode("utf-8"))
            except UnicodeDecodeError:
                raise Malformed(f"segment {i} is not valid UTF-8") from None
        if pos != len(data):
            raise Malformed("trailing bytes after descriptor")
        try:
            return FlightDescriptor(DescriptorKind.PATH, path=tuple(segments))
        except ValueError as exc:
            raise Malformed(str(exc)) from None
    if kind == DescriptorKind.CMD:
        try:
            (cmd_len,) = struct.unpack_from("<I", data, 1)
        except struct.error:
            raise Malformed("descriptor truncated before cmd length") from None
        cmd = data[5 : 5 + cmd_len]
        if len(cmd) != cmd_len:
            raise Malformed("descriptor truncated in cmd bytes")
        if 5 + cmd_len != len(data):
            raise Malformed("trailing bytes after descriptor")
        try:
            return FlightDescriptor(DescriptorKind.CMD, cmd=cmd)
        except ValueError as exc:
            raise Malformed(str(exc)) from None
    raise Malformed(f"unknown descriptor kind {kind}")


def encode_ticket(t: Ticket) -> bytes:
    if len(t.value) > 0xFFFFFFFF:
        raise Malformed("ticket too long")
    return struct.pack("<I", len(t.value)) + t.value


def decode_ticket(data: BufferLike) -> Ticket:
    data = bytes(data)
    try:
        (length,) = struct.unpack_from("<I", data, 0)
    except struct.error:
        raise Malformed("ticket truncated before length") from None
    value = data[4 : 4 + length]
    if len(value) != length:
        raise Malformed("ticket truncated")
    if 4 + length != len(data):
        raise Malformed("trailing bytes after ticket")
    try:
        return Ticket(value)
    except ValueError as exc:
        raise Malformed(str(exc)) from None


def encode_flight_info(info: FlightInfo) -> bytes:
    if len(info.endpoints) > 0xFFFF:
        raise Malformed("too many endpoints")
    parts = [
        struct.pack("<I", len(info.schema_bytes)),
        info.schema_bytes,
        struct.pack("<qq", info.total_records, info.total_bytes),
        struct.pack("<H", len(info.endpoints)),
    ]
    for ep in info.endpoints:
        parts.append(encode_ticket(ep.ticket))
        if len(ep.locations) > 0xFFFF:
            raise Malformed("too many locations")
        parts.append(struct.pack("<H", len(ep.locations)))
        for loc in ep.locations:
            raw = loc.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise Malformed("location too long")
            parts.append(struct.pack("<H", len(raw)))
            parts.append(raw)
    return b"".join(parts)


def decode_flight_info(data: BufferLike) -> FlightInfo:
    data = bytes(data)
    pos = 0
    try:
        (schema_len,) = struct.unpack_from("<I", data, pos)
    except struct.error:
        raise Malformed("flight info truncated before schema length") from None
    pos += 4
    schema_bytes = data[pos : pos + schema_len]
    if len(schema_bytes) != schema_len:
        raise Malformed("flight info truncated in schema bytes")
    pos += schema_len
    try:
        total_records, total_bytes = struct.unpack_from("<qq", data, pos)
        pos += 16
        (endpoint_count,) = struct.unpack_from("<H", data, pos)
        pos += 2
    except struct.error:
        raise Malformed("flight info truncated in totals") from None
    endpoints = []
    for i in range(endpoint_count):
        try:
            (ticket_len,) = struct.unpack_from("<I", data, pos)
        except struct.error:
            raise Malformed(f"flight info truncated in endpoint {i}") from None
        pos += 4
        ticket_raw = data[pos : pos + ticket_len]
        if len(ticket_raw) != ticket_len:
            raise Malformed(f"flight info truncated in endpoint {i} ticket")
        pos += ticket_len
        try:
            (loc_count,) = struct.unpack_from("<H", data, pos)
        except struct.error:
            raise Malformed(f"flight info truncated in endpoint {i}") from None
        pos += 2
        locations = []
        for j in range(loc_count):
            try:
                (loc_len,) = struct.unpack_from("<H", data, pos)
            except struct.error:
                raise Malformed(
                    f"flight info truncated in endpoint {i} location {j}"
                ) from None
            pos += 2
            raw = data[pos : pos + loc_len]
            if len(raw) != loc_len:
                raise Malformed(f"flight info truncated in endpoint {i} location {j}")
            pos += loc_len
            try:
                locations.append(raw.decode("utf-8"))
            except UnicodeDecodeError:
                raise Malformed(f"endpoint {i} location {j} is not UTF-8") from None
        try:
            endpoints.append(Endpoint(Ticket(ticket_raw), tuple(locations)))
        except ValueError as exc:
            raise Malformed(str(exc)) from None
    if pos != len(data):
        raise Malformed("trailing bytes after flight info")
    try:
        return FlightInfo(schema_bytes, tuple(endpoints), total_records, total_bytes)
    except ValueError as exc:
        raise Malformed(str(exc)) from None


def encode_put_result(r: PutResult) -> bytes:
    return struct.pack("<QQ", r.records_received, r.bytes_received)


def decode_put_result(data: BufferLike) -> PutResult:
    data = bytes(data)
    if len(data) != 16:
        raise Malformed(f"put result payload is {len(data)} bytes, want 16")
    records, nbytes = struct.unpack("<QQ", data)
    return PutResult(records, nbytes)


CLIENT = "client"
SERVER = "server"

_COMMANDS = {
    MsgType.GET_FLIGHT_INFO,
    MsgType.DO_GET,
    MsgType.DO_PUT,
    MsgType.LIST_FLIGHTS,
}


class SessionValidator:
    """State machine for one connection's post-preamble message sequence.

    observe() raises ProtocolViolation (or Malformed, for payloads that do
    not decode as their position requires) on the first illegal message;
    finish() raises if the session stopped before reaching a legal end.

    The server's single DoPut reply is only legal after the client's EOS;
    everywhere else the server may substitute ERROR for its normal reply,
    which also ends the session.
    """

    def __init__(self):
        self._state = "start"
        self._schema: Optional[Schema] = None
        self._put_rows = 0
        self._put_bytes = 0

    @property
    def done(self) -> bool:
        return self._state == "done"

    def observe(self, sender: str, msg: WireMessage) -> None:
        if sender not in (CLIENT, SERVER):
            raise ValueError(f"unknown sender {sender!r}")
        if int(msg.msg_type) not in set(int(m) for m in MsgType):
            raise Malformed(f"unknown message type 0x{int(msg.msg_type):02x}")
        handler = getattr(self, f"_state_{self._state}")
        handler(sender, MsgType(msg.msg_type), msg.payload)

    def finish(self) -> None:
        if self._state != "done":
            raise ProtocolViolation(f"session ended in state {self._state!r}")

    def _fail(self, sender: str, mtype: MsgType) -> None:
        raise ProtocolViolation(
            f"{sender} may not send {mtype.name} in state {self._state!r}"
        )

    @staticmethod
    def _require_empty(payload: BufferLike, what: str) -> None:
        if len(bytes(payload)) != 0:
            raise Malformed(f"{what} must carry an empty payload")

    def _server_error(self, payload: BufferLike) -> None:
        decode_error(payload)
        self._state = "done"

    def _state_done(self, sender, mtype, payload):
        self._fail(sender, mtype)

    def _state_start(self, sender, mtype, payload):
        if sender != CLIENT or mtype not in _COMMANDS:
            self._fail(sender, mtype)
        if mtype == MsgType.GET_FLIGHT_INFO:
            decode_descriptor(payload)
            self._state = "gfi_reply"
        elif mtype == MsgType.DO_GET:
            decode_ticket(payload)
            self._state = "get_schema"
        elif mtype == MsgType.DO_PUT:
            decode_descriptor(payload)
            self._state = "put_schema"
        else:
            self._require_empty(payload, "LIST_FLIGHTS")
            self._state = "list_body"

    def _state_gfi_reply(self, sender, mtype, payload):
        if sender != SERVER:
            self._fail(sender, mtype)
        if mtype == MsgType.FLIGHT_INFO:
            decode_flight_info(payload)
            self._state = "done"
        elif mtype == MsgType.ERROR:
            self._server_error(payload)
        else:
            self._fail(sender, mtype)

    def _state_get_schema(self, sender, mtype, payload):
        if sender != SERVER:
            self._fail(sender, mtype)
        if mtype == MsgType.SCHEMA:
            self._schema = decode_schema(payload)
            self._state = "get_stream"
        elif mtype == MsgType.ERROR:
            self._server_error(payload)
        else:
            self._fail(sender, mtype)

    def _state_get_stream(self, sender, mtype, payload):
        if sender != SERVER:
            self._fail(sender, mtype)
        if mtype == MsgType.BATCH:
            decode_batch(WireMessage(MsgType.BATCH, payload), self._schema)
        elif mtype == MsgType.EOS:
            self._require_empty(payload, "EOS")
            self._state = "done"
        elif mtype == MsgType.ERROR:
            self._server_error(payload)
        else:
            self._fail(sender, mtype)

    def _state_put_schema(self, sender, mtype, payload):
        if sender != CLIENT or mtype != MsgType.SCHEMA:
            self._fail(sender, mtype)
        self._schema = decode_schema(payload)
        self._state = "put_stream"

    def _state_put_stream(self, sender, mtype, payload):
        if sender != CLIENT:
            self._fail(sender, mtype)
        if mtype == MsgType.BATCH:
            batch = decode_batch(WireMessage(MsgType.BATCH, payload), self._schema)
            self._put_rows += batch.num_rows
            self._put_bytes += batch_byte_size(batch)
        elif mtype == MsgType.EOS:
            self._require_empty(payload, "EOS")
            self._state = "put_reply"
        else:
            self._fail(sender, mtype)

    def _state_put_reply(self, sender, mtype, payload):
        if sender != SERVER:
            self._fail(sender, mtype)
        if mtype == MsgType.PUT_RESULT:
            result = decode_put_result(payload)
            if (
                result.records_received != self._put_rows
                or result.bytes_received != self._put_bytes
            ):
                raise ProtocolViolation(
                    f"put result ({result.records_received} records, "
                    f"{result.bytes_received} bytes) does not match the stream "
                    f"({self._put_rows} records, {self._put_bytes} bytes)"
                )
            self._state = "done"
        elif mtype == MsgType.ERROR:
            self._server_error(payload)
        else:
            self._fail(sender, mtype)

    def _state_list_body(self, sender, mtype, payload):
        if sender != SERVER:
            self._fail(sender, mtype)
        if mtype == MsgType.FLIGHT_INFO:
            decode_flight_info(payload)
        elif mtype == MsgType.EOS:
            self._require_empty(payload, "EOS")
            self._state = "done"
        elif mtype == MsgType.ERROR:
            self._server_error(payload)
        else:
            self._fail(sender, mtype)


def validate_transcript(transcript: Iterable[Tuple[str, WireMessage]]) -> None:
    """Replay (sender, message) pairs through a fresh validator."""
    validator = SessionValidator()
    for sender, msg in transcript:
        validator.observe(sender, msg)
    validator.finish()
