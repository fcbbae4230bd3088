"""Numbered acceptance checks, one summary line each.

The checks pin the canonical worked example, sweep the codec and the
protocol validator with seeded randomness, prove end-to-end transfer
identity across the parallelism matrix, and measure the transfer trends
on loopback. Perf-trend checks state their machine requirements and skip
honestly when the host cannot support them.
"""

import random
import struct
import time
from collections import Counter

import psutil
import pytest

from flitelite.bench import (
    BenchConfig,
    efficiency_ratios,
    run_flight_bench,
    run_tcp_baseline,
)
from flitelite.client import FlightClient
from flitelite.columnar import (
    Dataset,
    batch_byte_size,
    batch_cells,
)
from flitelite.errors import FliteError, Malformed, NotFound
from flitelite.ipc import (
    MsgType,
    WireMessage,
    decode_batch,
    decode_schema,
    encode_batch,
    encode_schema,
)
from flitelite.perf import PERF_SCHEMA, client_batches
from flitelite.query import execute_query, parse_query, projected_schema
from flitelite.server import FlightServer
from flitelite.wire import FlightDescriptor, Ticket, validate_transcript

from helpers import random_batch, random_batches, random_query_text, random_schema
from oracle import oracle_execute


@pytest.mark.criterion(1)
def test_criterion_1_canonical_example(reference_schema, reference_batch, criterion_note):
    started = time.perf_counter()
    x, y, _ = reference_batch.columns
    assert bytes(x.validity) == b"\x03"
    assert x.null_count == 1
    assert struct.unpack("<4i", bytes(y.offsets)) == (0, 5, 9, 10)
    assert bytes(y.values) == b"ArrowData!"
    assert batch_byte_size(reference_batch) == 63

    assert decode_schema(encode_schema(reference_schema)) == reference_schema
    encoded = encode_batch(reference_batch)
    decoded = decode_batch(encoded, reference_schema)
    assert decoded == reference_batch
    assert bytes(encode_batch(decoded).payload) == bytes(encoded.payload)
    assert batch_cells(decoded) == [
        [555, "Arrow", 5.7866],
        [56565, "Data", 0.0],
        [None, "!", 3.14],
    ]
    elapsed = time.perf_counter() - started
    criterion_note(1, f"canonical batch byte-identical in {elapsed * 1000:.0f} ms")
    assert elapsed < 1.0


@pytest.mark.criterion(2)
def test_criterion_2_codec_round_trips(criterion_note):
    started = time.perf_counter()
    rng = random.Random(229)
    coverage = Counter()
    offsets_checked = 0
    trips = 1000
    for _ in range(trips):
        schema = random_schema(rng, max_fields=4)
        batch = random_batch(rng, schema, rng.randint(0, 40))
        for field, column in zip(schema.fields, batch.columns):
            coverage[(field.dtype, column.null_count > 0)] += 1

        assert decode_schema(encode_schema(schema)) == schema
        encoded = encode_batch(batch)
        payload = bytes(encoded.payload)
        _, buffer_count = struct.unpack_from("<QI", payload, 0)
        for k in range(buffer_count):
            offset, _ = struct.unpack_from("<QQ", payload, 12 + 16 * k)
            assert offset % 64 == 0
            offsets_checked += 1
        decoded = decode_batch(encoded, schema)
        assert decoded == batch
        assert bytes(encode_batch(decoded).payload) == payload

    for dtype in set(d for d, _ in coverage):
        assert coverage[(dtype, False)] > 0
    for dtype in {d for d, has_null in coverage if has_null}:
        assert coverage[(dtype, True)] > 0
    assert len({d for d, _ in coverage}) == 4
    assert len({d for d, has_null in coverage if has_null}) == 4
    elapsed = time.perf_counter() - started
    criterion_note(
        2, f"{trips} round-trips, {offsets_checked} raw offsets aligned, {elapsed:.1f} s"
    )
    assert elapsed < 30.0


@pytest.mark.criterion(3)
def test_criterion_3_end_to_end_identity(criterion_note):
    started = time.perf_counter()
    rng = random.Random(33033)
    combos = 0
    for endpoint_count in (1, 2, 4, 8):
        with FlightServer(endpoint_count=endpoint_count) as server:
            client = FlightClient(server.host, server.port)
            for parallelism in (1, 2, 4, 8):
                schema = random_schema(rng)
                batches = random_batches(rng, schema, max_batches=9, max_rows=400)
                name = f"d{endpoint_count}_{parallelism}"
                client.do_put_parallel(name, schema, batches, parallelism)
                info = client.get_flight_info(FlightDescriptor.for_path(name))
                assert len(info.endpoints) == endpoint_count
                dataset, _ = client.do_get_all(
                    info, parallelism=parallelism, order="roundrobin"
                )
                assert dataset == Dataset(schema, tuple(batches))
                combos += 1

    # one dataset at the stated row bound
    with FlightServer(endpoint_count=4) as server:
        client = FlightClient(server.host, server.port)
        schema = random_schema(rng)
        batches = random_batches(rng, schema, max_rows=20000, total_rows=100000)
        client.do_put_parallel("big", schema, batches, 8)
        info = client.get_flight_info(FlightDescriptor.for_path("big"))
        assert info.total_records == 100000
        dataset, _ = client.do_get_all(info, parallelism=8, order="roundrobin")
        assert dataset == Dataset(schema, tuple(batches))

    elapsed = time.perf_counter() - started
    criterion_note(3, f"{combos} combos plus a 100000-row dataset, {elapsed:.1f} s")
    assert elapsed < 120.0


@pytest.mark.criterion(4)
def test_criterion_4_protocol_conformance(
    reference_schema, reference_batch, criterion_note
):
    started = time.perf_counter()
    sessions = []

    def tap_factory():
        transcript = []
        sessions.append(transcript)
        return lambda sender, msg: transcript.append((sender, msg))

    with FlightServer(endpoint_count=2, perf_batch_rows=16) as server:
        client = FlightClient(server.host, server.port, tap_factory=tap_factory)
        client.do_put("t", reference_schema, [reference_batch] * 3)
        client.do_put("u", PERF_SCHEMA, client_batches(0, 96, 16))
        client.get_flight_info(FlightDescriptor.for_path("perf", "256"))
        client.do_get(Ticket.for_text("perf:256#0"))
        client.do_get(Ticket.for_text("perf:384#1"))
        client.do_get(Ticket.for_text("q:SELECT Y FROM t WHERE Z > 1.0"))
        client.list_flights()
        with pytest.raises(NotFound):
            client.get_flight_info(FlightDescriptor.for_path("ghost"))
        with pytest.raises(Malformed):
            client.do_put(
                FlightDescriptor.for_path("has space"),
                reference_schema,
                [reference_batch],
            )
        with pytest.raises(NotFound):
            client.do_get(Ticket.for_text("ghost#0"))
        client.get_flight_info(FlightDescriptor.for_command(b"SELECT Z FROM t"))

    for transcript in sessions:
        validate_transcript(transcript)  # correct sessions all accepted

    cases = 0
    survivors = []
    for s_index, transcript in enumerate(sessions):
        for m_index, (sender, msg) in enumerate(transcript):
            for alt in MsgType:
                if alt == msg.msg_type:
                    continue
                mutated = list(transcript)
                mutated[m_index] = (sender, WireMessage(alt, bytes(msg.payload)))
                cases += 1
                try:
                    validate_transcript(mutated)
                except FliteError:
                    pass
                else:
                    survivors.append(
                        (s_index, m_index, sender, MsgType(msg.msg_type).name, alt.name)
                    )
    elapsed = time.perf_counter() - started
    criterion_note(
        4,
        f"{len(sessions)} sessions accepted, {cases} type mutations rejected, "
        f"{elapsed:.1f} s",
    )
    assert cases >= 500
    assert survivors == []
    assert elapsed < 60.0


@pytest.mark.criterion(5)
def test_criterion_5_query_oracle(reference_schema, reference_batch, criterion_note):
    started = time.perf_counter()
    rng = random.Random(5150)
    pairs = 200
    null_predicate_rows = 0
    for _ in range(pairs):
        schema = random_schema(rng)
        batches = random_batches(rng, schema, max_batches=5, max_rows=80)
        query = parse_query(random_query_text(rng, schema, batches))
        out_schema, out = execute_query(query, schema, batches)
        assert [batch_cells(b) for b in out] == oracle_execute(query, schema, batches)
        assert out_schema == projected_schema(query, schema)
        if query.predicate is not None:
            index = schema.index_of(query.predicate.column)
            null_predicate_rows += sum(
                row[index] is None for b in batches for row in batch_cells(b)
            )
    assert null_predicate_rows > 0  # null-comparison rows really were exercised

    source = [reference_batch]
    _, out = execute_query(parse_query("SELECT * FROM t"), reference_schema, source)
    assert out == source
    _, out = execute_query(
        parse_query("SELECT Y FROM t WHERE Z > 1.0"), reference_schema, source
    )
    assert [row for b in out for row in batch_cells(b)] == [["Arrow"], ["!"]]
    _, out = execute_query(
        parse_query("SELECT X FROM t WHERE X = 555"), reference_schema, source
    )
    assert [row for b in out for row in batch_cells(b)] == [[555]]

    elapsed = time.perf_counter() - started
    criterion_note(
        5,
        f"{pairs} randomized pairs match the row oracle "
        f"({null_predicate_rows} null predicate rows), {elapsed:.1f} s",
    )
    assert elapsed < 60.0


@pytest.mark.criterion(6)
def test_criterion_6_multistream_scaling(criterion_note):
    physical = psutil.cpu_count(logical=False) or 1
    if physical < 4:
        pytest.skip(
            f"scaling trend requires >= 4 physical cores on the loopback host, "
            f"found {physical}"
        )
    started = time.perf_counter()

    def measure():
        rows = run_flight_bench(
            BenchConfig(
                mode="get", streams=(1, 4), records=(1_000_000,), batch_rows=65536
            )
        )
        by_streams = {r.streams: r.throughput_mbps for r in rows}
        return by_streams[4] / by_streams[1], by_streams

    ratio, by_streams = measure()
    if ratio < 1.5:  # flaky-tolerant: one retry
        ratio, by_streams = measure()
    elapsed = time.perf_counter() - started
    criterion_note(
        6,
        f"4 streams {by_streams[4]:.0f} MB/s vs 1 stream {by_streams[1]:.0f} MB/s, "
        f"ratio {ratio:.2f}, {elapsed:.1f} s",
    )
    assert ratio >= 1.5
    assert elapsed < 180.0


@pytest.mark.criterion(7)
def test_criterion_7_protocol_efficiency(criterion_note):
    started = time.perf_counter()
    records = 8_000_000  # 256 MB at 32 bytes per record
    flight = run_flight_bench(
        BenchConfig(mode="get", streams=(1,), records=(records,), batch_rows=262144)
    )
    baseline = run_tcp_baseline(
        BenchConfig(
            mode="tcp-baseline", streams=(1,), records=(records,), batch_rows=262144
        )
    )
    assert flight[0].bytes_total == baseline[0].bytes_total == 256_000_000
    ratios = efficiency_ratios(flight, baseline)
    assert len(ratios) == 1
    ratio = ratios[0][2]
    elapsed = time.perf_counter() - started
    criterion_note(
        7,
        f"256 MB single stream: {flight[0].throughput_mbps:.0f} MB/s over raw "
        f"TCP {baseline[0].throughput_mbps:.0f} MB/s, ratio {ratio:.2f}, "
        f"{elapsed:.1f} s",
    )
    assert ratio >= 0.5
    assert elapsed < 180.0


@pytest.mark.criterion(8)
def test_criterion_8_small_payload_overhead(criterion_note):
    started = time.perf_counter()
    rows = run_flight_bench(
        BenchConfig(
            mode="get", streams=(1,), records=(1_000, 1_000_000), batch_rows=65536
        )
    )
    by_records = {r.records_per_stream: r.throughput_mbps for r in rows}
    ratio = by_records[1_000] / by_records[1_000_000]
    elapsed = time.perf_counter() - started
    criterion_note(
        8,
        f"1000-record run reaches {ratio:.3f} of the million-record throughput "
        f"({by_records[1_000]:.0f} vs {by_records[1_000_000]:.0f} MB/s), "
        f"{elapsed:.1f} s",
    )
    assert ratio < 0.5
    assert elapsed < 60.0
