"""Client library: one TCP connection per command.

Downloads decode batches zero-copy from received payload buffers. For bulk
fetches the payloads can land in a reusable mmap-backed arena (huge pages
when the kernel grants them), which avoids first-touch page faults on every
run; the returned Dataset keeps the arena alive via its retain field.
"""

from __future__ import annotations

import mmap
import socket
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

from .columnar import Dataset, RecordBatch, Schema, batch_byte_size
from .errors import (
    ConnectFailed,
    ConnectionClosed,
    FliteError,
    FrameTooLarge,
    Malformed,
    ProtocolViolation,
    SchemaMismatch,
    Truncated,
    error_from_code,
)
from .ipc import (
    DEFAULT_FRAME_CAP,
    MsgType,
    WireMessage,
    decode_batch,
    decode_error,
    decode_schema,
    encode_batch,
    encode_schema,
    frame_prefix,
)
from .wire import (
    CLIENT,
    PREAMBLE,
    SERVER,
    FlightDescriptor,
    FlightInfo,
    PutResult,
    Ticket,
    decode_flight_info,
    decode_put_result,
    encode_descriptor,
    encode_ticket,
    parse_location,
)

_PREFIX = struct.Struct("<IB")
_MSG_TYPE_VALUES = frozenset(int(m) for m in MsgType)

PART_SEGMENT = "part"
ASSEMBLE_SEGMENT = "assemble"


class BufferArena:
    """Bump allocator over anonymous mmap chunks, reusable via reset()."""

    def __init__(self, chunk_bytes: int = 64 * 2**20):
        self._chunk_bytes = chunk_bytes
        self._chunks: List[mmap.mmap] = []
        self._active = 0
        self._pos = 0

    def _new_chunk(self, at_least: int) -> None:
        size = max(at_least, self._chunk_bytes)
        chunk = mmap.mmap(-1, size)
        try:
            chunk.madvise(mmap.MADV_HUGEPAGE)
        except (AttributeError, OSError):
            pass  # plain pages work fine, just slower to fault in
        self._chunks.append(chunk)

    def alloc(self, n: int) -> memoryview:
        if n == 0:
            return memoryview(b"")
        while self._active < len(self._chunks):
            chunk = self._chunks[self._active]
            if len(chunk) - self._pos >= n:
                view = memoryview(chunk)[self._pos : self._pos + n]
                self._pos += n
                return view
            self._active += 1
            self._pos = 0
        self._new_chunk(n)
        self._active = len(self._chunks) - 1
        self._pos = n
        return memoryview(self._chunks[self._active])[0:n]

    def reset(self) -> None:
        """Start allocating from the beginning again.

        The caller promises that no views handed out earlier are still in
        use; the memory is recycled, not zeroed.
        """
        self._active = 0
        self._pos = 0


class ArenaPool:
    """Hands arenas to download workers and takes them back after use."""

    def __init__(self):
        self._lock = threading.Lock()
        self._free: List[BufferArena] = []

    def acquire(self) -> BufferArena:
        with self._lock:
            if self._free:
                return self._free.pop()
        return BufferArena()

    def release(self, arena: BufferArena) -> None:
        arena.reset()
        with self._lock:
            self._free.append(arena)

    def recycle(self, dataset: Dataset) -> None:
        """Return a finished dataset's arenas; its batches must be dead."""
        for owner in dataset.retain:
            if isinstance(owner, BufferArena):
                self.release(owner)


class Connection:
    """One command's connection: preamble exchange plus framed messages."""

    def __init__(
        self,
        host: str,
        port: int,
        frame_cap: int = DEFAULT_FRAME_CAP,
        tap: Optional[Callable[[str, WireMessage], None]] = None,
    ):
        self.frame_cap = frame_cap
        self._tap = tap
        try:
            self._sock = socket.create_connection((host, port))
        except OSError as exc:
            raise ConnectFailed(f"cannot connect to {host}:{port}: {exc}") from None
        try:
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock.sendall(PREAMBLE)
            echoed = self._sock.recv(len(PREAMBLE), socket.MSG_WAITALL)
            if echoed != PREAMBLE:
                raise ProtocolViolation(
                    f"server preamble {echoed!r} does not match {PREAMBLE!r}"
                )
        except BaseException:
            self._sock.close()
            raise

    def close(self) -> None:
        self._sock.close()

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def send(self, msg_type: int, payload=b"") -> None:
        prefix = frame_prefix(msg_type, len(payload))
        if payload:
            total = len(prefix) + len(payload)
            sent = self._sock.sendmsg([prefix, payload])
            if sent != total:
                self._sock.sendall((prefix + bytes(payload))[sent:])
        else:
            self._sock.sendall(prefix)
        if self._tap is not None:
            self._tap(CLIENT, WireMessage(msg_type, bytes(payload)))

    def _recv_exact_into(self, view: memoryview) -> None:
        got = 0
        n = view.nbytes
        while got < n:
            r = self._sock.recv_into(view[got:], n - got, socket.MSG_WAITALL)
            if r == 0:
                raise Truncated(f"connection closed after {got} of {n} payload bytes")
            got += r

    def recv(self, arena: Optional[BufferArena] = None) -> WireMessage:
        header = self._sock.recv(5, socket.MSG_WAITALL)
        if not header:
            raise ConnectionClosed("connection closed at a frame boundary")
        while len(header) < 5:
            more = self._sock.recv(5 - len(header), socket.MSG_WAITALL)
            if not more:
                raise Truncated("connection closed inside a frame header")
            header += more
        payload_len, msg_type = _PREFIX.unpack(header)
        if msg_type not in _MSG_TYPE_VALUES:
            raise Malformed(f"unknown message type 0x{msg_type:02x}")
        if payload_len > self.frame_cap:
            raise FrameTooLarge(
                f"payload of {payload_len} bytes exceeds cap {self.frame_cap}"
            )
        if payload_len == 0:
            payload: object = b""
        else:
            target = (
                arena.alloc(payload_len)
                if arena is not None
                else memoryview(bytearray(payload_len))
            )
            self._recv_exact_into(target)
            payload = target
        msg = WireMessage(msg_type, payload)
        if self._tap is not None:
            self._tap(SERVER, WireMessage(msg_type, bytes(payload)))
        return msg


@dataclass(frozen=True)
class TransferStats:
    streams: int
    records: int
    bytes: int
    elapsed_seconds: float
    per_stream: tuple  # (records, bytes, seconds) per stream

    @classmethod
    def from_streams(cls, per_stream: Sequence[Tuple[int, int, float]]) -> "TransferStats":
        per_stream = tuple(per_stream)
        return cls(
            streams=len(per_stream),
            records=sum(r for r, _, _ in per_stream),
            bytes=sum(b for _, b, _ in per_stream),
            elapsed_seconds=max((s for _, _, s in per_stream), default=0.0),
            per_stream=per_stream,
        )


def _raise_remote(payload) -> None:
    code, message = decode_error(payload)
    raise error_from_code(code, message)


class FlightClient:
    def __init__(
        self,
        host: str,
        port: int,
        frame_cap: int = DEFAULT_FRAME_CAP,
        tap_factory: Optional[Callable[[], Callable[[str, WireMessage], None]]] = None,
    ):
        self.host = host
        self.port = port
        self.frame_cap = frame_cap
        self.tap_factory = tap_factory

    def _connect(self, host: Optional[str] = None, port: Optional[int] = None) -> Connection:
        tap = self.tap_factory() if self.tap_factory is not None else None
        return Connection(
            host if host is not None else self.host,
            port if port is not None else self.port,
            self.frame_cap,
            tap,
        )

    # Single-command operations

    def get_flight_info(self, descriptor: FlightDescriptor) -> FlightInfo:
        with self._connect() as conn:
            conn.send(MsgType.GET_FLIGHT_INFO, encode_descriptor(descriptor))
            reply = conn.recv()
            if reply.msg_type == MsgType.ERROR:
                _raise_remote(reply.payload)
            if reply.msg_type != MsgType.FLIGHT_INFO:
                raise ProtocolViolation(
                    f"expected FLIGHT_INFO, got {MsgType(reply.msg_type).name}"
                )
            return decode_flight_info(reply.payload)

    def list_flights(self) -> List[FlightInfo]:
        with self._connect() as conn:
            conn.send(MsgType.LIST_FLIGHTS)
            infos = []
            while True:
                msg = conn.recv()
                if msg.msg_type == MsgType.FLIGHT_INFO:
                    infos.append(decode_flight_info(msg.payload))
                elif msg.msg_type == MsgType.EOS:
                    if len(bytes(msg.payload)) != 0:
                        raise ProtocolViolation("EOS must carry an empty payload")
                    return infos
                elif msg.msg_type == MsgType.ERROR:
                    _raise_remote(msg.payload)
                else:
                    raise ProtocolViolation(
                        f"unexpected {MsgType(msg.msg_type).name} in a listing"
                    )

    def do_get(
        self,
        ticket: Ticket,
        arena: Optional[BufferArena] = None,
        host: Optional[str] = None,
        port: Optional[int] = None,
    ) -> Tuple[Schema, List[RecordBatch]]:
        """Redeem one ticket; returns the stream's schema and its batches."""
        with self._connect(host, port) as conn:
            conn.send(MsgType.DO_GET, encode_ticket(ticket))
            first = conn.recv(arena)
            if first.msg_type == MsgType.ERROR:
                _raise_remote(first.payload)
            if first.msg_type != MsgType.SCHEMA:
                raise ProtocolViolation(
                    f"DoGet stream must open with SCHEMA, got "
                    f"{MsgType(first.msg_type).name}"
                )
            schema = decode_schema(first.payload)
            batches = []
            while True:
                msg = conn.recv(arena)
                if msg.msg_type == MsgType.BATCH:
                    batches.append(decode_batch(msg, schema))
                elif msg.msg_type == MsgType.EOS:
                    if len(bytes(msg.payload)) != 0:
                        raise ProtocolViolation("EOS must carry an empty payload")
                    return schema, batches
                elif msg.msg_type == MsgType.ERROR:
                    _raise_remote(msg.payload)
                else:
                    raise ProtocolViolation(
                        f"unexpected {MsgType(msg.msg_type).name} in a DoGet stream"
                    )

    # Composite operations

    def do_get_all(
        self,
        info: FlightInfo,
        parallelism: int = 1,
        order: str = "concat",
        arena_pool: Optional[ArenaPool] = None,
    ) -> Tuple[Dataset, TransferStats]:
        """Fetch every endpoint of a flight, at most `parallelism` at a time.

        order picks how per-endpoint batch lists recombine: "concat" for
        contiguous row ranges, "roundrobin" to invert round-robin batch
        partitioning. Any stream failure aborts the whole fetch.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if order not in ("concat", "roundrobin"):
            raise ValueError(f"unknown reassembly order {order!r}")
        endpoints = info.endpoints
        expected_schema = info.schema
        results: List[Optional[tuple]] = [None] * len(endpoints)
        start = time.perf_counter()

        def fetch(index: int) -> None:
            endpoint = endpoints[index]
            host, port = parse_location(endpoint.locations[0])
            arena = arena_pool.acquire() if arena_pool is not None else None
            try:
                schema, batches = self.do_get(endpoint.ticket, arena, host, port)
            except BaseException:
                if arena is not None:
                    arena_pool.release(arena)
                raise
            seconds = time.perf_counter() - start
            rows = sum(b.num_rows for b in batches)
            nbytes = sum(batch_byte_size(b) for b in batches)
            results[index] = (schema, batches, rows, nbytes, seconds, arena)

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(fetch, i) for i in range(len(endpoints))]
            first_error: Optional[BaseException] = None
            for fut in futures:
                exc = fut.exception()
                if exc is not None and first_error is None:
                    first_error = exc
        if first_error is not None:
            for entry in results:  # nothing partial escapes; recycle arenas
                if entry is not None and entry[5] is not None:
                    arena_pool.release(entry[5])
            raise first_error

        for schema, *_ in filter(None, results):
            if schema != expected_schema:
                raise SchemaMismatch("endpoint schema differs from flight schema")

        per_endpoint = [entry[1] for entry in results]
        if order == "concat":
            batches = [b for stream in per_endpoint for b in stream]
        else:
            counts = [len(stream) for stream in per_endpoint]
            total = sum(counts)
            expected = [
                (total - i + len(endpoints) - 1) // len(endpoints)
                for i in range(len(endpoints))
            ]
            if counts != expected:
                raise Malformed(
                    f"endpoint batch counts {counts} do not invert round-robin"
                )
            batches = [
                per_endpoint[j % len(endpoints)][j // len(endpoints)]
                for j in range(total)
            ]
        arenas = tuple(entry[5] for entry in results if entry[5] is not None)
        dataset = Dataset(expected_schema, tuple(batches), retain=arenas)
        stats = TransferStats.from_streams(
            [(entry[2], entry[3], entry[4]) for entry in results]
        )
        return dataset, stats

    def do_put(
        self,
        descriptor,
        schema: Schema,
        batches: Sequence[RecordBatch],
    ) -> PutResult:
        """Upload one stream of batches under a descriptor (or dataset name)."""
        if isinstance(descriptor, str):
            descriptor = FlightDescriptor.for_path(descriptor)
        with self._connect() as conn:
            conn.send(MsgType.DO_PUT, encode_descriptor(descriptor))
            conn.send(MsgType.SCHEMA, encode_schema(schema))
            for batch in batches:
                conn.send(MsgType.BATCH, encode_batch(batch).payload)
            conn.send(MsgType.EOS)
            reply = conn.recv()
            if reply.msg_type == MsgType.ERROR:
                _raise_remote(reply.payload)
            if reply.msg_type != MsgType.PUT_RESULT:
                raise ProtocolViolation(
                    f"expected PUT_RESULT, got {MsgType(reply.msg_type).name}"
                )
            return decode_put_result(reply.payload)

    def do_put_parallel(
        self,
        name: str,
        schema: Schema,
        batches: Sequence[RecordBatch],
        streams: int,
    ) -> Tuple[PutResult, TransferStats]:
        """Upload batches over `streams` connections, then splice server-side.

        Part i carries batches i, i+streams, i+2*streams, ... so the final
        assemble restores the input order exactly.
        """
        if streams < 1:
            raise ValueError("streams must be >= 1")
        batches = list(batches)
        parts = [batches[i::streams] for i in range(streams)]
        results: List[Optional[tuple]] = [None] * streams
        start = time.perf_counter()

        def upload(index: int) -> None:
            descriptor = FlightDescriptor.for_path(name, PART_SEGMENT, str(index))
            result = self.do_put(descriptor, schema, parts[index])
            seconds = time.perf_counter() - start
            results[index] = (result, seconds)

        with ThreadPoolExecutor(max_workers=streams) as pool:
            futures = [pool.submit(upload, i) for i in range(streams)]
            first_error: Optional[BaseException] = None
            for fut in futures:
                exc = fut.exception()
                if exc is not None and first_error is None:
                    first_error = exc
        if first_error is not None:
            raise first_error

        try:
            assemble = self.do_put(
                FlightDescriptor.for_path(name, ASSEMBLE_SEGMENT, str(streams)),
                schema,
                [],
            )
        except FliteError as exc:
            raise type(exc)(f"assemble step failed: {exc}") from exc
        if assemble != PutResult(0, 0):
            raise ProtocolViolation(
                f"assemble reply should be empty, got {assemble}"
            )
        aggregate = PutResult(
            sum(r.records_received for r, _ in results),
            sum(r.bytes_received for r, _ in results),
        )
        stats = TransferStats.from_streams(
            [
                (r.records_received, r.bytes_received, seconds)
                for r, seconds in results
            ]
        )
        return aggregate, stats
