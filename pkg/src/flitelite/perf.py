"""Synthetic benchmark dataset.

Fixed schema of four non-nullable Int64 fields f0..f3, 32 bytes per record,
cell formula value(row, j) = 4*row + j. Generation and verification run on
numpy blocks; a byte-capped cache keeps fully encoded DoGet streams so
repeated fetches of the same row range serve identical bytes without
re-encoding (two fetches of one ticket must match byte for byte anyway).
"""

from __future__ import annotations

import re
import struct
import threading
from collections import OrderedDict
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .columnar import Array, DataType, Field, RecordBatch, Schema
from .ipc import MsgType, encode_schema, frame, frame_prefix

FIELD_COUNT = 4
RECORD_BYTES = 32

PERF_SCHEMA = Schema(
    [Field(f"f{j}", DataType.INT64, nullable=False) for j in range(FIELD_COUNT)]
)
PERF_SCHEMA_BYTES = encode_schema(PERF_SCHEMA)

_TICKET_RE = re.compile(r"\Aperf:(\d+)#(\d+)\Z")


def perf_ticket_text(records: int, index: int) -> str:
    return f"perf:{records}#{index}"


def parse_perf_ticket(text: str) -> Optional[Tuple[int, int]]:
    m = _TICKET_RE.match(text)
    if not m:
        return None
    return int(m.group(1)), int(m.group(2))


def endpoint_range(records: int, endpoints: int, index: int) -> Tuple[int, int]:
    """Row range [lo, hi) served by endpoint `index` of `endpoints`."""
    chunk = -(-records // endpoints) if records else 0
    lo = min(index * chunk, records)
    hi = min(lo + chunk, records)
    return lo, hi


def record_block(lo: int, hi: int) -> np.ndarray:
    """Rows [lo, hi) as an int64 block of shape (4, n); row j is field j."""
    base = np.arange(lo, hi, dtype=np.int64) * 4
    return base[np.newaxis, :] + np.arange(FIELD_COUNT, dtype=np.int64)[:, np.newaxis]


def _align64(n: int) -> int:
    return (n + 63) & ~63


def batch_payload(lo: int, hi: int) -> bytes:
    """BATCH payload for rows [lo, hi), byte-identical to the generic encoder."""
    n = hi - lo
    blen = 8 * n
    step = _align64(blen)
    header = [struct.pack("<QI", n, FIELD_COUNT)]
    for j in range(FIELD_COUNT):
        header.append(struct.pack("<QQ", j * step, blen))
    block = record_block(lo, hi)
    if step == blen:
        body = block.tobytes()
    else:
        padded = np.zeros(FIELD_COUNT * step, dtype=np.uint8)
        for j in range(FIELD_COUNT):
            padded[j * step : j * step + blen] = block[j].view(np.uint8)
        body = padded.tobytes()
    return b"".join(header) + body


def batch_ranges(lo: int, hi: int, batch_rows: int) -> Iterator[Tuple[int, int]]:
    pos = lo
    while pos < hi:
        yield pos, min(pos + batch_rows, hi)
        pos = min(pos + batch_rows, hi)


def stream_bytes(lo: int, hi: int, batch_rows: int) -> bytes:
    """A complete encoded DoGet reply: SCHEMA frame, batches, EOS frame."""
    frames = [frame(MsgType.SCHEMA, PERF_SCHEMA_BYTES)]
    for b_lo, b_hi in batch_ranges(lo, hi, batch_rows):
        payload = batch_payload(b_lo, b_hi)
        frames.append(frame_prefix(MsgType.BATCH, len(payload)))
        frames.append(payload)
    frames.append(frame(MsgType.EOS))
    return b"".join(frames)


class StreamCache:
    """LRU cache of encoded perf streams, capped by total byte size."""

    def __init__(self, capacity_bytes: int = 768 * 2**20):
        self.capacity_bytes = capacity_bytes
        self._lock = threading.Lock()
        self._entries: "OrderedDict[tuple, bytes]" = OrderedDict()
        self._total = 0

    def get(self, lo: int, hi: int, batch_rows: int) -> bytes:
        key = (lo, hi, batch_rows)
        with self._lock:
            cached = self._entries.get(key)
            if cached is not None:
                self._entries.move_to_end(key)
                return cached
        built = stream_bytes(lo, hi, batch_rows)
        with self._lock:
            if key not in self._entries:
                self._entries[key] = built
                self._total += len(built)
                while self._total > self.capacity_bytes and len(self._entries) > 1:
                    _, evicted = self._entries.popitem(last=False)
                    self._total -= len(evicted)
            return self._entries[key]


def client_batches(lo: int, hi: int, batch_rows: int) -> List[RecordBatch]:
    """Materialize perf batches locally (the upload side of the benchmark)."""
    out = []
    for b_lo, b_hi in batch_ranges(lo, hi, batch_rows):
        block = record_block(b_lo, b_hi)
        n = b_hi - b_lo
        columns = tuple(
            Array(DataType.INT64, n, 0, None, None, memoryview(block[j]).cast("B"))
            for j in range(FIELD_COUNT)
        )
        out.append(RecordBatch(PERF_SCHEMA, columns, n))
    return out


def verify_batches(batches: Sequence[RecordBatch], lo: int) -> Tuple[int, int]:
    """Check decoded batches against the formula starting at row lo.

    Returns (rows_checked, mismatching_cells). Column buffers are compared
    in bulk, so this is safe to run on multi-million-row fetches.
    """
    mismatches = 0
    row = lo
    for batch in batches:
        n = batch.num_rows
        expect = record_block(row, row + n)
        for j in range(FIELD_COUNT):
            got = np.frombuffer(batch.columns[j].values, dtype="<i8")
            mismatches += int(np.count_nonzero(got != expect[j]))
        row += n
    return row - lo, mismatches
