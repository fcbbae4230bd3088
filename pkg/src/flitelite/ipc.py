"""Framed binary messages and the schema/batch codecs.

Wire frame: u32le payload length | u8 message type | payload. The length
excludes the 5-byte prefix. Batch payloads carry a descriptor table of
(offset, length) pairs into a 64-byte-aligned body so decoding can hand out
views of the received bytes without copying buffer contents.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

from .columnar import (
    BufferLike,
    DataType,
    Field,
    RecordBatch,
    Schema,
    batch_from_arrays,
    column_from_buffers,
)
from .errors import (
    ConnectionClosed,
    FrameTooLarge,
    Malformed,
    NameTooLong,
    TooManyFields,
    Truncated,
)

DEFAULT_FRAME_CAP = 1 << 30


class MsgType(IntEnum):
    SCHEMA = 0x01
    BATCH = 0x02
    EOS = 0x03
    ERROR = 0x04
    GET_FLIGHT_INFO = 0x10
    FLIGHT_INFO = 0x11
    DO_GET = 0x12
    DO_PUT = 0x13
    PUT_RESULT = 0x14
    LIST_FLIGHTS = 0x15


_MSG_TYPE_VALUES = frozenset(m.value for m in MsgType)

_PREFIX = struct.Struct("<IB")
_BATCH_HEAD = struct.Struct("<QI")


@dataclass(eq=False)
class WireMessage:
    msg_type: int
    payload: BufferLike

    def __eq__(self, other) -> bool:
        if not isinstance(other, WireMessage):
            return NotImplemented
        return self.msg_type == other.msg_type and bytes(self.payload) == bytes(
            other.payload
        )


def frame_prefix(msg_type: int, payload_len: int) -> bytes:
    return _PREFIX.pack(payload_len, msg_type)


def frame(msg_type: int, payload: BufferLike = b"") -> bytes:
    """One complete frame as a single byte string."""
    return _PREFIX.pack(len(payload), msg_type) + bytes(payload)


def encode_schema(schema: Schema) -> bytes:
    if len(schema.fields) > 0xFFFF:
        raise TooManyFields(f"{len(schema.fields)} fields")
    parts = [struct.pack("<H", len(schema.fields))]
    for f in schema.fields:
        name = f.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise NameTooLong(f"field name is {len(name)} UTF-8 bytes")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<BB", int(f.dtype), 1 if f.nullable else 0))
    return b"".join(parts)


def decode_schema(data: BufferLike) -> Schema:
    data = bytes(data)
    pos = 0
    try:
        (field_count,) = struct.unpack_from("<H", data, pos)
    except struct.error:
        raise Malformed("schema truncated before field count") from None
    pos += 2
    fields = []
    for i in range(field_count):
        try:
            (name_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name_raw = data[pos : pos + name_len]
            if len(name_raw) != name_len:
                raise struct.error
            pos += name_len
            tag, nullable = struct.unpack_from("<BB", data, pos)
            pos += 2
        except struct.error:
            raise Malformed(f"schema truncated in field {i}") from None
        try:
            name = name_raw.decode("utf-8")
        except UnicodeDecodeError:
            raise Malformed(f"field {i} name is not valid UTF-8") from None
        if tag not in (1, 2, 3, 4):
            raise Malformed(f"field {i} has unknown type tag {tag}")
        if nullable not in (0, 1):
            raise Malformed(f"field {i} has bad nullable byte {nullable}")
        try:
            fields.append(Field(name, DataType(tag), bool(nullable)))
        except ValueError as exc:
            raise Malformed(str(exc)) from None
    if pos != len(data):
        raise Malformed(f"{len(data) - pos} trailing bytes after schema")
    try:
        return Schema(fields)
    except ValueError as exc:
        raise Malformed(str(exc)) from None


def _align64(n: int) -> int:
    return (n + 63) & ~63


def buffer_count_for(schema: Schema) -> int:
    """Buffers per batch in canonical order: per field, validity when the
    field is nullable, offsets when Utf8, then values."""
    total = 0
    for f in schema.fields:
        total += 1
        if f.nullable:
            total += 1
        if f.dtype is DataType.UTF8:
            total += 1
    return total


def _canonical_buffers(batch: RecordBatch):
    for col in batch.columns:
        if col.validity is not None:
            yield col.validity
        if col.offsets is not None:
            yield col.offsets
        yield col.values


def encode_batch(batch: RecordBatch) -> WireMessage:
    """Serialize a batch: header, descriptor table, aligned zero-padded body.

    Every buffer lands at the next multiple of 64; the final buffer is padded
    out to 64 as well, so the body length is itself a multiple of 64.
    """
    descriptors = []
    pos = 0
    buffers = list(_canonical_buffers(batch))
    for buf in buffers:
        length = buf.nbytes if isinstance(buf, memoryview) else len(buf)
        descriptors.append((pos, length))
        pos = _align64(pos + length)
    body = bytearray(pos)
    for (off, length), buf in zip(descriptors, buffers):
        body[off : off + length] = buf
    header = [_BATCH_HEAD.pack(batch.num_rows, len(buffers))]
    for off, length in descriptors:
        header.append(struct.pack("<QQ", off, length))
    payload = b"".join(header) + bytes(body)
    return WireMessage(MsgType.BATCH, payload)


def decode_batch(msg: WireMessage, schema: Schema) -> RecordBatch:
    """Inverse of encode_batch under the same schema.

    Decoded buffers are memoryview slices of the payload (no content copies);
    the caller must keep the payload's backing memory alive as long as the
    batch is in use.
    """
    if msg.msg_type != MsgType.BATCH:
        raise Malformed(f"expected BATCH, got type 0x{msg.msg_type:02x}")
    payload = memoryview(msg.payload)
    if payload.nbytes < _BATCH_HEAD.size:
        raise Malformed("batch payload shorter than its header")
    num_rows, count = _BATCH_HEAD.unpack_from(payload, 0)
    if count != buffer_count_for(schema):
        raise Malformed(
            f"batch has {count} buffers, schema needs {buffer_count_for(schema)}"
        )
    table_end = _BATCH_HEAD.size + 16 * count
    if payload.nbytes < table_end:
        raise Malformed("batch payload shorter than its descriptor table")
    flat = struct.unpack_from(f"<{2 * count}Q", payload, _BATCH_HEAD.size)
    body = payload[table_end:]
    body_len = body.nbytes

    def take(index: int) -> memoryview:
        off, length = flat[2 * index], flat[2 * index + 1]
        if off % 64:
            raise Malformed(f"buffer {index} offset {off} not 64-byte aligned")
        if off + length > body_len:
            raise Malformed(
                f"buffer {index} spans [{off}, {off + length}) beyond body "
                f"of {body_len} bytes"
            )
        return body[off : off + length]

    columns = []
    next_buf = 0
    for f in schema.fields:
        validity = None
        offsets = None
        if f.nullable:
            validity = take(next_buf)
            next_buf += 1
        if f.dtype is DataType.UTF8:
            offsets = take(next_buf)
            next_buf += 1
        values = take(next_buf)
        next_buf += 1
        columns.append(column_from_buffers(f, num_rows, validity, offsets, values))
    return batch_from_arrays(schema, columns)


def encode_error(code: int, message: str) -> bytes:
    text = message or "unspecified error"
    return struct.pack("<I", code) + text.encode("utf-8")


def decode_error(payload: BufferLike) -> tuple:
    data = bytes(payload)
    if len(data) < 4:
        raise Malformed("error payload shorter than its code")
    (code,) = struct.unpack_from("<I", data, 0)
    if code not in (1, 2, 3, 4):
        raise Malformed(f"unknown error code {code}")
    raw = data[4:]
    if not raw or b"\x00" in raw:
        raise Malformed("error message must be non-empty NUL-free text")
    try:
        message = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise Malformed("error message is not valid UTF-8") from None
    return code, message


def _read_exact(source, n: int, *, eof_ok: bool = False) -> Optional[bytes]:
    """Read exactly n bytes from a stream with a read(k) method.

    Returns None on clean EOF before the first byte when eof_ok, raises
    Truncated on EOF anywhere else.
    """
    if n == 0:
        return b""
    first = source.read(n)
    if not first:
        if eof_ok:
            return None
        raise Truncated(f"EOF, wanted {n} bytes")
    if len(first) == n:
        return first
    buf = bytearray(first)
    while len(buf) < n:
        chunk = source.read(n - len(buf))
        if not chunk:
            raise Truncated(f"EOF after {len(buf)} of {n} bytes")
        buf.extend(chunk)
    return bytes(buf)


def read_message(source, frame_cap: int = DEFAULT_FRAME_CAP) -> WireMessage:
    """Read one complete frame from a binary stream.

    The source needs a read(n) method with usual stream semantics (may return
    fewer bytes, empty at EOF). Raises ConnectionClosed on clean EOF at a
    frame boundary, Truncated mid-frame, FrameTooLarge past the cap, and
    Malformed for unknown message types.
    """
    header = _read_exact(source, 5, eof_ok=True)
    if header is None:
        raise ConnectionClosed("stream ended at a frame boundary")
    payload_len, msg_type = _PREFIX.unpack(header)
    if msg_type not in _MSG_TYPE_VALUES:
        raise Malformed(f"unknown message type 0x{msg_type:02x}")
    if payload_len > frame_cap:
        raise FrameTooLarge(f"payload of {payload_len} bytes exceeds cap {frame_cap}")
    payload = _read_exact(source, payload_len)
    return WireMessage(msg_type, payload if payload is not None else b"")
