"""In-memory columnar values.

A column is a typed Array backed by flat byte buffers: an optional validity
bitmap (LSB-first within each byte), an offsets buffer for variable-width
strings, and a values buffer. Equal-length arrays grouped under a Schema form
a RecordBatch, the unit everything else ships around.

Buffers are bytes when built locally and memoryview slices when decoded off
the wire; both satisfy the buffer protocol and equality normalizes them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional, Sequence, Union

from .errors import (
    IndexOutOfBounds,
    Malformed,
    NullNotAllowed,
    NullabilityMismatch,
    ShapeMismatch,
    TypeMismatch,
)

BufferLike = Union[bytes, bytearray, memoryview]

INT32_MIN, INT32_MAX = -(1 << 31), (1 << 31) - 1
INT64_MIN, INT64_MAX = -(1 << 63), (1 << 63) - 1

# Offsets are signed 32-bit, so one string column holds at most 2 GiB minus 1.
MAX_UTF8_VALUES = (1 << 31) - 1


class DataType(IntEnum):
    """Supported column types. Values double as the wire type tags."""

    INT32 = 1
    INT64 = 2
    FLOAT64 = 3
    UTF8 = 4

    @property
    def fixed_width(self) -> Optional[int]:
        return _FIXED_WIDTHS[self]


_FIXED_WIDTHS = {
    DataType.INT32: 4,
    DataType.INT64: 8,
    DataType.FLOAT64: 8,
    DataType.UTF8: None,
}

_VALUE_STRUCTS = {
    DataType.INT32: struct.Struct("<i"),
    DataType.INT64: struct.Struct("<q"),
    DataType.FLOAT64: struct.Struct("<d"),
}


@dataclass(frozen=True)
class Field:
    name: str
    dtype: DataType
    nullable: bool = False

    def __post_init__(self):
        if not self.name:
            raise ValueError("field name must be non-empty")
        if not isinstance(self.dtype, DataType):
            raise ValueError(f"not a DataType: {self.dtype!r}")


@dataclass(frozen=True)
class Schema:
    fields: tuple

    def __init__(self, fields: Iterable[Field]):
        fields = tuple(fields)
        if not fields:
            raise ValueError("schema needs at least one field")
        names = [f.name for f in fields]
        if len(set(names)) != len(names):
            raise ValueError("duplicate field names in schema")
        object.__setattr__(self, "fields", fields)

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def names(self) -> tuple:
        return tuple(f.name for f in self.fields)

    def index_of(self, name: str) -> Optional[int]:
        for i, f in enumerate(self.fields):
            if f.name == name:
                return i
        return None


def _buf_len(buf: Optional[BufferLike]) -> int:
    if buf is None:
        return 0
    if isinstance(buf, memoryview):
        return buf.nbytes
    return len(buf)


def _buf_bytes(buf: Optional[BufferLike]) -> bytes:
    if buf is None:
        return b""
    return bytes(buf)


@dataclass(eq=False)
class Array:
    dtype: DataType
    length: int
    null_count: int
    validity: Optional[BufferLike]
    offsets: Optional[BufferLike]
    values: BufferLike

    def __eq__(self, other) -> bool:
        if not isinstance(other, Array):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.length == other.length
            and self.null_count == other.null_count
            and (self.validity is None) == (other.validity is None)
            and _buf_bytes(self.validity) == _buf_bytes(other.validity)
            and (self.offsets is None) == (other.offsets is None)
            and _buf_bytes(self.offsets) == _buf_bytes(other.offsets)
            and _buf_bytes(self.values) == _buf_bytes(other.values)
        )

    def byte_size(self) -> int:
        return _buf_len(self.validity) + _buf_len(self.offsets) + _buf_len(self.values)


@dataclass(eq=False)
class RecordBatch:
    schema: Schema
    columns: tuple
    num_rows: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, RecordBatch):
            return NotImplemented
        return (
            self.schema == other.schema
            and self.num_rows == other.num_rows
            and self.columns == other.columns
        )


@dataclass(eq=False)
class Dataset:
    """A schema plus an ordered run of batches, with size accounting.

    retain holds objects that own memory the batch buffers reference (arena
    pools hand these over so decoded views stay valid for the dataset's life).
    """

    schema: Schema
    batches: tuple
    name: Optional[str] = None
    retain: tuple = ()

    def __post_init__(self):
        self.batches = tuple(self.batches)

    @property
    def total_records(self) -> int:
        return sum(b.num_rows for b in self.batches)

    @property
    def total_bytes(self) -> int:
        return sum(batch_byte_size(b) for b in self.batches)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.schema == other.schema and self.batches == other.batches


def _pack_bitmap(mask: Sequence[bool]) -> bytes:
    buf = bytearray((len(mask) + 7) // 8)
    for i, ok in enumerate(mask):
        if ok:
            buf[i >> 3] |= 1 << (i & 7)
    return bytes(buf)


def bitmap_get(bitmap: BufferLike, i: int) -> bool:
    return bool(bitmap[i >> 3] & (1 << (i & 7)))


def count_valid(bitmap: BufferLike, length: int) -> int:
    if length == 0:
        return 0
    as_int = int.from_bytes(_buf_bytes(bitmap), "little")
    return (as_int & ((1 << length) - 1)).bit_count()


def _check_int(value, lo: int, hi: int, dtype: DataType):
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeMismatch(f"expected int for {dtype.name}, got {type(value).__name__}")
    if not lo <= value <= hi:
        raise TypeMismatch(f"value {value} out of range for {dtype.name}")
    return value


def build_array(field: Field, cells: Iterable) -> Array:
    """Materialize one column from Python cells; None marks an absent cell.

    Absent cells get validity bit 0 and a zero-filled slot (fixed width) or a
    zero-length slice (Utf8, offset repeated). Absent cells in a non-nullable
    field raise NullNotAllowed; a cell of the wrong Python type raises
    TypeMismatch.
    """
    cells = list(cells)
    n = len(cells)
    mask = [c is not None for c in cells]
    null_count = mask.count(False)
    if null_count and not field.nullable:
        raise NullNotAllowed(f"null cell in non-nullable field {field.name!r}")
    validity = _pack_bitmap(mask) if field.nullable else None

    dtype = field.dtype
    if dtype is DataType.UTF8:
        chunks = []
        offsets = [0]
        total = 0
        for c in cells:
            if c is not None:
                if not isinstance(c, str):
                    raise TypeMismatch(
                        f"expected str for UTF8, got {type(c).__name__}"
                    )
                encoded = c.encode("utf-8")
                total += len(encoded)
                if total > MAX_UTF8_VALUES:
                    raise Malformed("utf8 values buffer exceeds 32-bit offset range")
                chunks.append(encoded)
            offsets.append(total)
        values = b"".join(chunks)
        offsets_buf = struct.pack(f"<{n + 1}i", *offsets)
        return Array(dtype, n, null_count, validity, offsets_buf, values)

    if dtype is DataType.INT32:
        ints = [0 if c is None else _check_int(c, INT32_MIN, INT32_MAX, dtype) for c in cells]
        values = struct.pack(f"<{n}i", *ints)
    elif dtype is DataType.INT64:
        ints = [0 if c is None else _check_int(c, INT64_MIN, INT64_MAX, dtype) for c in cells]
        values = struct.pack(f"<{n}q", *ints)
    elif dtype is DataType.FLOAT64:
        floats = []
        for c in cells:
            if c is None:
                floats.append(0.0)
            elif isinstance(c, bool) or not isinstance(c, (int, float)):
                raise TypeMismatch(
                    f"expected float for FLOAT64, got {type(c).__name__}"
                )
            else:
                floats.append(float(c))
        values = struct.pack(f"<{n}d", *floats)
    else:  # pragma: no cover
        raise TypeMismatch(f"unsupported dtype {dtype!r}")
    return Array(dtype, n, null_count, validity, None, values)


def array_get(a: Array, i: int):
    """Read back cell i, or None where the validity bit is clear."""
    if not 0 <= i < a.length:
        raise IndexOutOfBounds(f"index {i} out of range for length {a.length}")
    if a.validity is not None and not bitmap_get(a.validity, i):
        return None
    if a.dtype is DataType.UTF8:
        start, end = struct.unpack_from("<ii", a.offsets, 4 * i)
        return _buf_bytes(a.values[start:end]).decode("utf-8")
    return _VALUE_STRUCTS[a.dtype].unpack_from(a.values, i * a.dtype.fixed_width)[0]


def array_cells(a: Array) -> list:
    return [array_get(a, i) for i in range(a.length)]


def batch_from_arrays(schema: Schema, columns: Sequence[Array]) -> RecordBatch:
    columns = tuple(columns)
    if len(columns) != len(schema.fields):
        raise ShapeMismatch(
            f"{len(columns)} columns for {len(schema.fields)} fields"
        )
    num_rows = columns[0].length
    for f, col in zip(schema.fields, columns):
        if col.length != num_rows:
            raise ShapeMismatch(
                f"column {f.name!r} has {col.length} rows, expected {num_rows}"
            )
        if col.dtype != f.dtype:
            raise TypeMismatch(
                f"column {f.name!r} is {col.dtype.name}, field wants {f.dtype.name}"
            )
        if (col.validity is not None) != f.nullable:
            raise NullabilityMismatch(
                f"column {f.name!r}: validity buffer "
                f"{'present' if col.validity is not None else 'absent'} "
                f"but field nullable={f.nullable}"
            )
    return RecordBatch(schema, columns, num_rows)


def batch_byte_size(b: RecordBatch) -> int:
    """Payload bytes across all buffers, excluding schema and framing."""
    return sum(col.byte_size() for col in b.columns)


def batch_cells(b: RecordBatch) -> list:
    """Rows as lists of Python cells, None for nulls."""
    cols = [array_cells(c) for c in b.columns]
    return [list(row) for row in zip(*cols)] if cols else []


def column_from_buffers(
    field: Field,
    length: int,
    validity: Optional[BufferLike],
    offsets: Optional[BufferLike],
    values: BufferLike,
) -> Array:
    """Build a validated Array from raw decoded buffers.

    Raises Malformed on any structural violation. Buffers are kept as given
    (decoders pass memoryview slices, preserving zero-copy).
    """
    if length < 0:
        raise Malformed("negative length")
    if field.nullable:
        want = (length + 7) // 8
        if validity is None or _buf_len(validity) != want:
            raise Malformed(
                f"validity buffer for {field.name!r}: "
                f"got {_buf_len(validity)} bytes, want {want}"
            )
        null_count = length - count_valid(validity, length)
    else:
        if validity is not None:
            raise Malformed(f"unexpected validity buffer for {field.name!r}")
        null_count = 0

    if field.dtype is DataType.UTF8:
        if offsets is None or _buf_len(offsets) != 4 * (length + 1):
            raise Malformed(
                f"offsets buffer for {field.name!r}: "
                f"got {_buf_len(offsets)} bytes, want {4 * (length + 1)}"
            )
        ends = struct.unpack(f"<{length + 1}i", _buf_bytes(offsets))
        if ends[0] != 0:
            raise Malformed(f"offsets for {field.name!r} must start at 0")
        prev = 0
        for off in ends:
            if off < prev:
                raise Malformed(f"offsets for {field.name!r} decrease")
            prev = off
        if ends[-1] != _buf_len(values):
            raise Malformed(
                f"final offset {ends[-1]} != values length {_buf_len(values)} "
                f"for {field.name!r}"
            )
    else:
        if offsets is not None:
            raise Malformed(f"unexpected offsets buffer for {field.name!r}")
        want = length * field.dtype.fixed_width
        if _buf_len(values) != want:
            raise Malformed(
                f"values buffer for {field.name!r}: "
                f"got {_buf_len(values)} bytes, want {want}"
            )
    return Array(field.dtype, length, null_count, validity, offsets, values)
