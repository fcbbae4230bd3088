"""TCP service answering GetFlightInfo, DoGet, DoPut, and ListFlights.

One connection carries one command. Stored datasets live in an in-memory
store with atomic replacement; the synthetic perf dataset is generated on
demand and fully-encoded streams are cached so repeated fetches of one row
range cost a single sendall. Parallel uploads use hidden "part" datasets
spliced together by a final "assemble" call.
"""

from __future__ import annotations

import argparse
import logging
import re
import socket
import struct
import threading
import time
from typing import Dict, List, Optional, Tuple

from .columnar import Dataset, RecordBatch, Schema, batch_byte_size
from .errors import (
    FliteError,
    Malformed,
    NotFound,
    ProtocolViolation,
)
from .ipc import (
    DEFAULT_FRAME_CAP,
    MsgType,
    decode_batch,
    decode_schema,
    encode_batch,
    encode_error,
    encode_schema,
    frame,
    frame_prefix,
    read_message,
)
from .perf import (
    PERF_SCHEMA_BYTES,
    RECORD_BYTES,
    StreamCache,
    batch_payload,
    batch_ranges,
    endpoint_range,
    parse_perf_ticket,
    perf_ticket_text,
)
from .query import execute_query, parse_query, projected_schema
from .wire import (
    PREAMBLE,
    DescriptorKind,
    Endpoint,
    FlightDescriptor,
    FlightInfo,
    PutResult,
    Ticket,
    decode_descriptor,
    decode_ticket,
    encode_flight_info,
    encode_put_result,
    format_location,
)

logger = logging.getLogger("flitelite.server")

_IDENT_RE = re.compile(r"\A[A-Za-z_][A-Za-z0-9_]*\Z")

PERF_PATH_HEAD = "perf"
PART_SEGMENT = "part"
ASSEMBLE_SEGMENT = "assemble"


def _send_frame(conn: socket.socket, msg_type: int, payload=b"") -> None:
    """Gather-send one frame, finishing any partial send with sendall."""
    prefix = frame_prefix(msg_type, len(payload))
    if not payload:
        conn.sendall(prefix)
        return
    total = len(prefix) + len(payload)
    sent = conn.sendmsg([prefix, payload])
    if sent != total:
        rest = (prefix + bytes(payload))[sent:]
        conn.sendall(rest)


class DatasetStore:
    """Named immutable datasets plus hidden upload parts, lock-protected."""

    def __init__(self):
        self._lock = threading.Lock()
        self._datasets: Dict[str, Dataset] = {}
        self._parts: Dict[Tuple[str, int], Dataset] = {}

    def snapshot(self, name: str) -> Optional[Dataset]:
        with self._lock:
            return self._datasets.get(name)

    def put(self, name: str, dataset: Dataset) -> None:
        with self._lock:
            self._datasets[name] = dataset

    def put_part(self, name: str, index: int, dataset: Dataset) -> None:
        with self._lock:
            self._parts[(name, index)] = dataset

    def names(self) -> List[str]:
        with self._lock:
            return sorted(self._datasets)

    def assemble(self, name: str, streams: int, schema: Schema) -> None:
        """Splice parts 0..streams-1 into dataset `name`, then drop the parts.

        Validates presence, schema agreement, and round-robin arithmetic
        before any mutation, so a failed assemble changes nothing.
        """
        with self._lock:
            parts = []
            for i in range(streams):
                part = self._parts.get((name, i))
                if part is None:
                    raise NotFound(f"missing part {i} for dataset {name!r}")
                parts.append(part)
            total = sum(len(p.batches) for p in parts)
            for i, part in enumerate(parts):
                if part.schema != schema:
                    raise Malformed(f"part {i} schema differs from assemble schema")
                expected = (total - i + streams - 1) // streams
                if len(part.batches) != expected:
                    raise Malformed(
                        f"part {i} holds {len(part.batches)} batches, "
                        f"round-robin of {total} over {streams} needs {expected}"
                    )
            batches = [
                parts[j % streams].batches[j // streams] for j in range(total)
            ]
            self._datasets[name] = Dataset(schema, tuple(batches), name=name)
            for i in range(streams):
                del self._parts[(name, i)]


class FlightServer:
    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        endpoint_count: int = 1,
        perf_batch_rows: int = 4096,
        frame_cap: int = DEFAULT_FRAME_CAP,
        stream_cache_bytes: int = 768 * 2**20,
    ):
        if endpoint_count < 1:
            raise ValueError("endpoint_count must be >= 1")
        if perf_batch_rows < 1:
            raise ValueError("perf_batch_rows must be >= 1")
        self.endpoint_count = endpoint_count
        self.perf_batch_rows = perf_batch_rows
        self.frame_cap = frame_cap
        self.store = DatasetStore()
        self.stream_cache = StreamCache(stream_cache_bytes)
        self.command_log: List[dict] = []

        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(128)
        self.host = host
        self.port = self._listener.getsockname()[1]
        self._accept_thread: Optional[threading.Thread] = None
        self._closed = False

    @property
    def location(self) -> str:
        return format_location(self.host, self.port)

    def start(self) -> "FlightServer":
        self._accept_thread = threading.Thread(
            target=self._accept_loop, name="flitelite-accept", daemon=True
        )
        self._accept_thread.start()
        return self

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        # accept() in another thread is not woken by close() on Linux, so
        # nudge the loop with a throwaway connection before closing.
        try:
            with socket.create_connection((self.host, self.port), timeout=1):
                pass
        except OSError:
            pass
        try:
            self._listener.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)

    def __enter__(self) -> "FlightServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.close()

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, addr = self._listener.accept()
            except OSError:
                return
            if self._closed:
                conn.close()
                return
            threading.Thread(
                target=self._handle_connection,
                args=(conn, addr),
                name=f"flitelite-conn-{addr[1]}",
                daemon=True,
            ).start()

    def _handle_connection(self, conn: socket.socket, addr) -> None:
        with conn:
            try:
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                opening = conn.recv(len(PREAMBLE), socket.MSG_WAITALL)
                if opening != PREAMBLE:
                    logger.warning("connection from %s sent a bad preamble", addr)
                    return
                conn.sendall(PREAMBLE)
                reader = conn.makefile("rb")
                try:
                    command = read_message(reader, self.frame_cap)
                    self._dispatch(conn, reader, command)
                finally:
                    reader.close()
            except FliteError as exc:
                self._send_error(conn, exc)
            except (OSError, ValueError):
                logger.exception("connection from %s failed", addr)

    def _dispatch(self, conn, reader, command) -> None:
        started = time.perf_counter()
        if command.msg_type == MsgType.GET_FLIGHT_INFO:
            descriptor = decode_descriptor(command.payload)
            info = self._flight_info_for(descriptor)
            _send_frame(conn, MsgType.FLIGHT_INFO, encode_flight_info(info))
            self._log(
                "get_flight_info",
                self._describe(descriptor),
                info.total_records,
                info.total_bytes,
                started,
            )
        elif command.msg_type == MsgType.DO_GET:
            ticket = decode_ticket(command.payload)
            rows, nbytes = self._serve_ticket(conn, ticket)
            self._log("do_get", ticket.value.decode("utf-8", "replace"), rows, nbytes, started)
        elif command.msg_type == MsgType.DO_PUT:
            descriptor = decode_descriptor(command.payload)
            result = self._receive_put(conn, reader, descriptor)
            _send_frame(conn, MsgType.PUT_RESULT, encode_put_result(result))
            self._log(
                "do_put",
                self._describe(descriptor),
                result.records_received,
                result.bytes_received,
                started,
            )
        elif command.msg_type == MsgType.LIST_FLIGHTS:
            if len(bytes(command.payload)) != 0:
                raise ProtocolViolation("LIST_FLIGHTS must carry an empty payload")
            count = self._serve_listing(conn)
            self._log("list_flights", "-", count, 0, started)
        else:
            raise ProtocolViolation(
                f"connection must open with a command, got "
                f"{MsgType(command.msg_type).name}"
            )

    @staticmethod
    def _describe(descriptor: FlightDescriptor) -> str:
        if descriptor.kind == DescriptorKind.PATH:
            return "/".join(descriptor.path)
        return "cmd:" + descriptor.cmd.decode("utf-8", "replace")

    def _log(self, command, detail, rows, nbytes, started) -> None:
        seconds = time.perf_counter() - started
        self.command_log.append(
            {
                "command": command,
                "detail": detail,
                "rows": rows,
                "bytes": nbytes,
                "seconds": seconds,
            }
        )
        logger.info(
            "%s %s rows=%s bytes=%s seconds=%.6f", command, detail, rows, nbytes, seconds
        )

    def _endpoints_for(self, name: str, count: int) -> tuple:
        location = (self.location,)
        return tuple(
            Endpoint(Ticket.for_text(f"{name}#{i}"), location) for i in range(count)
        )

    def _flight_info_for(self, descriptor: FlightDescriptor) -> FlightInfo:
        if descriptor.kind == DescriptorKind.CMD:
            try:
                text = descriptor.cmd.decode("utf-8")
            except UnicodeDecodeError:
                raise Malformed("query command is not valid UTF-8") from None
            ast = parse_query(text)
            dataset = self.store.snapshot(ast.source)
            if dataset is None:
                raise NotFound(f"no dataset named {ast.source!r}")
            out_schema = projected_schema(ast, dataset.schema)
            endpoint = Endpoint(Ticket.for_text("q:" + text), (self.location,))
            return FlightInfo(encode_schema(out_schema), (endpoint,), -1, -1)

        path = descriptor.path
        if len(path) == 2 and path[0] == PERF_PATH_HEAD:
            if not path[1].isdigit():
                raise Malformed(f"record count {path[1]!r} is not a decimal number")
            records = int(path[1])
            endpoints = tuple(
                Endpoint(
                    Ticket.for_text(perf_ticket_text(records, i)), (self.location,)
                )
                for i in range(self.endpoint_count)
            )
            return FlightInfo(
                PERF_SCHEMA_BYTES, endpoints, records, records * RECORD_BYTES
            )
        if len(path) == 1:
            dataset = self.store.snapshot(path[0])
            if dataset is None:
                raise NotFound(f"no dataset named {path[0]!r}")
            return FlightInfo(
                encode_schema(dataset.schema),
                self._endpoints_for(path[0], self.endpoint_count),
                dataset.total_records,
                dataset.total_bytes,
            )
        raise Malformed(
            "path must be [name] or [perf, records], got "
            + "/".join(path)
        )

    # DoGet

    def _serve_ticket(self, conn, ticket: Ticket) -> Tuple[int, int]:
        try:
            text = ticket.value.decode("utf-8")
        except UnicodeDecodeError:
            raise Malformed("ticket is not valid UTF-8") from None

        perf = parse_perf_ticket(text)
        if perf is not None:
            records, index = perf
            lo, hi = endpoint_range(records, self.endpoint_count, index)
            return self._serve_perf(conn, lo, hi)

        if text.startswith("q:"):
            query_text = text[2:]
            ast = parse_query(query_text)
            dataset = self.store.snapshot(ast.source)
            if dataset is None:
                raise NotFound(f"no dataset named {ast.source!r}")
            out_schema, out_batches = execute_query(ast, dataset.schema, dataset.batches)
            return self._serve_batches(conn, out_schema, out_batches)

        name, sep, idx_text = text.rpartition("#")
        if not sep or not _IDENT_RE.match(name) or not idx_text.isdigit():
            raise Malformed(f"unrecognized ticket {text!r}")
        dataset = self.store.snapshot(name)
        if dataset is None:
            raise NotFound(f"no dataset named {name!r}")
        index = int(idx_text)
        picked = list(dataset.batches[index :: self.endpoint_count])
        return self._serve_batches(conn, dataset.schema, picked)

    def _serve_perf(self, conn, lo: int, hi: int) -> Tuple[int, int]:
        rows = hi - lo
        payload_bytes = rows * RECORD_BYTES
        estimated = payload_bytes + 128 * (rows // self.perf_batch_rows + 2)
        if estimated <= self.stream_cache.capacity_bytes:
            conn.sendall(self.stream_cache.get(lo, hi, self.perf_batch_rows))
            return rows, payload_bytes
        # Too large to cache whole; stream batch by batch at constant memory.
        _send_frame(conn, MsgType.SCHEMA, PERF_SCHEMA_BYTES)
        for b_lo, b_hi in batch_ranges(lo, hi, self.perf_batch_rows):
            _send_frame(conn, MsgType.BATCH, batch_payload(b_lo, b_hi))
        _send_frame(conn, MsgType.EOS)
        return rows, payload_bytes

    def _serve_batches(self, conn, schema: Schema, batches) -> Tuple[int, int]:
        rows = 0
        nbytes = 0
        _send_frame(conn, MsgType.SCHEMA, encode_schema(schema))
        for batch in batches:
            msg = encode_batch(batch)
            _send_frame(conn, MsgType.BATCH, msg.payload)
            rows += batch.num_rows
            nbytes += batch_byte_size(batch)
        _send_frame(conn, MsgType.EOS)
        return rows, nbytes

    # DoPut

    @staticmethod
    def _check_put_path(descriptor: FlightDescriptor) -> Tuple[str, ...]:
        if descriptor.kind != DescriptorKind.PATH:
            raise Malformed("DoPut requires a path descriptor")
        path = descriptor.path
        if len(path) not in (1, 3):
            raise Malformed("DoPut path must be [name] or [name, part|assemble, n]")
        if not _IDENT_RE.match(path[0]):
            raise Malformed(f"dataset name {path[0]!r} is not an identifier")
        if len(path) == 3 and path[1] not in (PART_SEGMENT, ASSEMBLE_SEGMENT):
            raise Malformed(f"unknown DoPut form {path[1]!r}")
        if len(path) == 3 and not path[2].isdigit():
            raise Malformed(f"DoPut path index {path[2]!r} is not a number")
        return path

    def _receive_put(self, conn, reader, descriptor: FlightDescriptor) -> PutResult:
        # Application-level rejections are deferred: the reply slot only
        # opens after the client's EOS, so drain the stream first. Sequence
        # violations abort immediately since the stream has no further shape.
        deferred: Optional[FliteError] = None
        path: Tuple[str, ...] = ()
        try:
            path = self._check_put_path(descriptor)
        except FliteError as exc:
            deferred = exc

        first = read_message(reader, self.frame_cap)
        if first.msg_type != MsgType.SCHEMA:
            raise ProtocolViolation(
                f"DoPut stream must open with SCHEMA, got {MsgType(first.msg_type).name}"
            )
        schema: Optional[Schema] = None
        try:
            schema = decode_schema(first.payload)
        except FliteError as exc:
            if deferred is None:
                deferred = exc

        batches: List[RecordBatch] = []
        rows = 0
        nbytes = 0
        while True:
            msg = read_message(reader, self.frame_cap)
            if msg.msg_type == MsgType.BATCH:
                if deferred is None:
                    try:
                        batch = decode_batch(msg, schema)
                    except FliteError as exc:
                        deferred = exc
                        continue
                    batches.append(batch)
                    rows += batch.num_rows
                    nbytes += batch_byte_size(batch)
            elif msg.msg_type == MsgType.EOS:
                if len(bytes(msg.payload)) != 0:
                    raise ProtocolViolation("EOS must carry an empty payload")
                break
            else:
                raise ProtocolViolation(
                    f"unexpected {MsgType(msg.msg_type).name} in a DoPut stream"
                )
        if deferred is not None:
            raise deferred

        name = path[0]
        if len(path) == 1:
            self.store.put(name, Dataset(schema, tuple(batches), name=name))
            return PutResult(rows, nbytes)
        if path[1] == PART_SEGMENT:
            self.store.put_part(name, int(path[2]), Dataset(schema, tuple(batches)))
            return PutResult(rows, nbytes)
        streams = int(path[2])
        if streams < 1:
            raise Malformed("assemble stream count must be >= 1")
        if batches:
            raise Malformed("assemble must carry zero batches")
        self.store.assemble(name, streams, schema)
        return PutResult(0, 0)

    # ListFlights

    def _serve_listing(self, conn) -> int:
        count = 0
        for name in self.store.names():
            dataset = self.store.snapshot(name)
            if dataset is None:
                continue  # replaced mid-listing; skip
            info = FlightInfo(
                encode_schema(dataset.schema),
                self._endpoints_for(name, self.endpoint_count),
                dataset.total_records,
                dataset.total_bytes,
            )
            _send_frame(conn, MsgType.FLIGHT_INFO, encode_flight_info(info))
            count += 1
        _send_frame(conn, MsgType.EOS)
        return count

    def _send_error(self, conn, exc: FliteError) -> None:
        code = getattr(exc, "wire_code", 4)
        try:
            _send_frame(conn, MsgType.ERROR, encode_error(code, str(exc) or type(exc).__name__))
        except OSError:
            pass


def _parse_listen(text: str) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"{text!r} is not HOST:PORT")
    return host or "127.0.0.1", int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="flitelite-server",
        description="Serve datasets over the flitelite streaming protocol.",
    )
    parser.add_argument(
        "--listen",
        type=_parse_listen,
        default=("127.0.0.1", 0),
        metavar="HOST:PORT",
        help="listen address (port 0 picks a free port)",
    )
    parser.add_argument("--endpoints", type=int, default=1, metavar="N")
    parser.add_argument("--perf-batch-rows", type=int, default=4096, metavar="N")
    parser.add_argument(
        "--frame-cap", type=int, default=DEFAULT_FRAME_CAP, metavar="BYTES"
    )
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s %(name)s %(message)s"
    )
    host, port = args.listen
    server = FlightServer(
        host=host,
        port=port,
        endpoint_count=args.endpoints,
        perf_batch_rows=args.perf_batch_rows,
        frame_cap=args.frame_cap,
    )
    server.start()
    print(f"listening on {server.host}:{server.port}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
