"""Benchmark harness: multi-stream transfer sweeps plus a raw-TCP baseline.

Each (streams, records) cell is timed over a number of repetitions and the
median is reported. Transferred content is verified against the synthetic
dataset's value formula after the clock stops; a cell is only reported once
its bytes check out. Throughput is decimal MB/s: bytes / 1e6 / seconds.
"""

from __future__ import annotations

import argparse
import logging
import socket
import statistics
import sys
import threading
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .client import ArenaPool, FlightClient
from .errors import FliteError
from .perf import PERF_SCHEMA, RECORD_BYTES, client_batches, verify_batches
from .server import FlightServer
from .wire import FlightDescriptor

logger = logging.getLogger("flitelite.bench")

MODES = ("get", "put", "tcp-baseline")

CSV_HEADER = (
    "mode,streams,records_per_stream,records_per_batch,"
    "bytes_total,seconds_median,throughput_mbps"
)


class VerificationError(Exception):
    """Transferred content failed the value-formula check."""


@dataclass(frozen=True)
class BenchConfig:
    mode: str
    streams: Tuple[int, ...] = (1, 2, 4, 8, 16)
    records: Tuple[int, ...] = ()
    batch_rows: int = 65536
    reps: int = 3
    server: Optional[Tuple[str, int]] = None  # None: spawn in-process

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.streams:
            raise ValueError("need at least one stream count")
        if not self.records:
            raise ValueError("need at least one record count")
        for n in (*self.streams, *self.records, self.batch_rows, self.reps):
            if n < 1:
                raise ValueError(f"all counts must be >= 1, got {n}")
        object.__setattr__(self, "streams", tuple(sorted(self.streams)))
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class BenchRow:
    mode: str
    streams: int
    records_per_stream: int
    records_per_batch: int
    bytes_total: int
    seconds_median: float
    throughput_mbps: float


def _median(samples: Sequence[float]) -> float:
    return statistics.median(samples)


def _row(config: BenchConfig, streams: int, records: int, seconds: List[float]) -> BenchRow:
    bytes_total = RECORD_BYTES * streams * records
    seconds_median = _median(seconds)
    return BenchRow(
        mode=config.mode,
        streams=streams,
        records_per_stream=records,
        records_per_batch=config.batch_rows,
        bytes_total=bytes_total,
        seconds_median=seconds_median,
        throughput_mbps=bytes_total / 1e6 / seconds_median,
    )


def _verify_contiguous(batches, total: int, where: str) -> None:
    checked, mismatches = verify_batches(batches, 0)
    if mismatches or checked != total:
        raise VerificationError(
            f"{where}: {mismatches} mismatched cells, "
            f"{checked} of {total} rows checked"
        )


def _timed_get(client: FlightClient, total: int, streams: int, pool: ArenaPool):
    """One full fetch; returns (wall seconds, dataset) with content unverified."""
    info = client.get_flight_info(FlightDescriptor.for_path("perf", str(total)))
    t0 = time.perf_counter()
    dataset, stats = client.do_get_all(
        info, parallelism=streams, order="concat", arena_pool=pool
    )
    seconds = time.perf_counter() - t0
    if stats.bytes != RECORD_BYTES * total:
        raise VerificationError(
            f"get: transferred {stats.bytes} bytes, expected {RECORD_BYTES * total}"
        )
    return seconds, dataset


def _bench_get(config: BenchConfig, client: FlightClient, streams: int, records: int) -> BenchRow:
    total = streams * records
    pool = ArenaPool()
    _, warm = _timed_get(client, total, streams, pool)  # fault in pages untimed
    _verify_contiguous(warm.batches, total, "get warmup")
    pool.recycle(warm)
    del warm
    samples = []
    for _ in range(config.reps):
        seconds, dataset = _timed_get(client, total, streams, pool)
        _verify_contiguous(dataset.batches, total, "get")
        pool.recycle(dataset)
        del dataset
        samples.append(seconds)
    return _row(config, streams, records, samples)


def _bench_put(config: BenchConfig, client: FlightClient, streams: int, records: int) -> BenchRow:
    total = streams * records
    batches = client_batches(0, total, config.batch_rows)
    name = "bench_put"

    def one_rep() -> float:
        t0 = time.perf_counter()
        result, stats = client.do_put_parallel(name, PERF_SCHEMA, batches, streams)
        seconds = time.perf_counter() - t0
        if result.records_received != total or result.bytes_received != RECORD_BYTES * total:
            raise VerificationError(
                f"put: server counted {result.records_received} records / "
                f"{result.bytes_received} bytes, expected {total} / {RECORD_BYTES * total}"
            )
        if stats.bytes != result.bytes_received:
            raise VerificationError("put: client and server byte counts disagree")
        info = client.get_flight_info(FlightDescriptor.for_path(name))
        stored, _ = client.do_get_all(info, parallelism=1, order="roundrobin")
        _verify_contiguous(stored.batches, total, "put fetch-back")
        return seconds

    one_rep()  # warmup
    samples = [one_rep() for _ in range(config.reps)]
    return _row(config, streams, records, samples)


def run_flight_bench(config: BenchConfig) -> List[BenchRow]:
    if config.mode not in ("get", "put"):
        raise ValueError(f"run_flight_bench handles get/put, not {config.mode!r}")
    cell = _bench_get if config.mode == "get" else _bench_put
    rows = []
    for streams in config.streams:
        if config.server is not None:
            client = FlightClient(*config.server)
            for records in config.records:
                rows.append(cell(config, client, streams, records))
        else:
            with FlightServer(
                endpoint_count=streams, perf_batch_rows=config.batch_rows
            ) as server:
                client = FlightClient(server.host, server.port)
                for records in config.records:
                    rows.append(cell(config, client, streams, records))
    return rows


# Raw-TCP baseline: same byte volume over plain sockets, no framing.

_SEND_BLOCK = bytes(range(256)) * (4 * 2**20 // 256)  # 4 MiB pattern


def _sink(conn: socket.socket, expected: int, done: List[float], index: int) -> None:
    buf = bytearray(1 << 20)
    count = 0
    with conn:
        while True:
            n = conn.recv_into(buf)
            if n == 0:
                break
            count += n
    done[index] = time.perf_counter()
    if count != expected:
        raise VerificationError(
            f"tcp sink {index}: received {count} bytes, expected {expected}"
        )


def _send_stream(addr: Tuple[str, int], nbytes: int) -> None:
    with socket.create_connection(addr) as conn:
        conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        remaining = nbytes
        while remaining > 0:
            chunk = _SEND_BLOCK[: min(remaining, len(_SEND_BLOCK))]
            conn.sendall(chunk)
            remaining -= len(chunk)


def _baseline_cell(config: BenchConfig, streams: int, records: int) -> BenchRow:
    per_stream = RECORD_BYTES * records
    if per_stream <= 0:
        raise ValueError("baseline payload must be at least 1 byte")

    listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    listener.bind(("127.0.0.1", 0))
    listener.listen(streams)
    addr = listener.getsockname()

    def one_rep() -> float:
        finished = [0.0] * streams
        errors: List[BaseException] = []

        def guarded(fn, *args):
            try:
                fn(*args)
            except BaseException as exc:  # surfaced after join
                errors.append(exc)

        t0 = time.perf_counter()
        senders = [
            threading.Thread(target=guarded, args=(_send_stream, addr, per_stream))
            for _ in range(streams)
        ]
        for t in senders:
            t.start()
        sinks = []
        for i in range(streams):
            conn, _ = listener.accept()
            t = threading.Thread(target=guarded, args=(_sink, conn, per_stream, finished, i))
            t.start()
            sinks.append(t)
        for t in senders + sinks:
            t.join()
        if errors:
            raise errors[0]
        return max(finished) - t0

    try:
        one_rep()  # warmup
        samples = [one_rep() for _ in range(config.reps)]
    finally:
        listener.close()
    return _row(config, streams, records, samples)


def run_tcp_baseline(config: BenchConfig) -> List[BenchRow]:
    if config.mode != "tcp-baseline":
        raise ValueError(f"run_tcp_baseline requires mode tcp-baseline, not {config.mode!r}")
    return [
        _baseline_cell(config, streams, records)
        for streams in config.streams
        for records in config.records
    ]


def efficiency_ratios(
    flight_rows: Sequence[BenchRow], baseline_rows: Sequence[BenchRow]
) -> List[Tuple[int, int, float]]:
    """flight/baseline throughput per matching (streams, records) cell, logged."""
    ceiling = {
        (row.streams, row.records_per_stream): row.throughput_mbps
        for row in baseline_rows
    }
    ratios = []
    for row in flight_rows:
        key = (row.streams, row.records_per_stream)
        if key in ceiling:
            ratio = row.throughput_mbps / ceiling[key]
            ratios.append((*key, ratio))
            logger.info(
                "efficiency streams=%d records=%d flight=%.2f MB/s "
                "baseline=%.2f MB/s ratio=%.3f",
                key[0], key[1], row.throughput_mbps, ceiling[key], ratio,
            )
    return ratios


def emit_csv(rows: Sequence[BenchRow]) -> str:
    ordered = sorted(rows, key=lambda r: (r.mode, r.streams, r.records_per_stream))
    lines = [CSV_HEADER]
    for r in ordered:
        lines.append(
            f"{r.mode},{r.streams},{r.records_per_stream},{r.records_per_batch},"
            f"{r.bytes_total},{r.seconds_median!r},{r.throughput_mbps:.2f}"
        )
    return "\n".join(lines) + "\n"


def _parse_counts(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _parse_hostport(text: str) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flitelite-bench",
        description="Throughput sweeps over flight transfers and a raw-TCP baseline.",
    )
    parser.add_argument("--mode", required=True, choices=MODES)
    parser.add_argument("--streams", type=_parse_counts, default=(1, 2, 4, 8, 16))
    parser.add_argument("--records", type=_parse_counts, required=True,
                        help="records per stream, comma-separated")
    parser.add_argument("--batch-rows", type=int, required=True)
    target = parser.add_mutually_exclusive_group()
    target.add_argument("--server", type=_parse_hostport, default=None)
    target.add_argument("--spawn", action="store_true",
                        help="run an in-process server (default)")
    parser.add_argument("--reps", type=int, default=3)
    parser.add_argument("--csv", default=None, help="write CSV here instead of stdout")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        config = BenchConfig(
            mode=args.mode,
            streams=args.streams,
            records=args.records,
            batch_rows=args.batch_rows,
            reps=args.reps,
            server=args.server,
        )
        if config.mode == "tcp-baseline":
            rows = run_tcp_baseline(config)
        else:
            rows = run_flight_bench(config)
    except (ValueError, FliteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 2
    text = emit_csv(rows)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
