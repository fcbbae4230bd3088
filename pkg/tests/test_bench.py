import csv
import io

import pytest

from flitelite.bench import (
    CSV_HEADER,
    MODES,
    BenchConfig,
    BenchRow,
    efficiency_ratios,
    emit_csv,
    main,
    run_flight_bench,
    run_tcp_baseline,
)
from flitelite.perf import RECORD_BYTES
from flitelite.server import FlightServer


def small_config(mode, **overrides):
    defaults = dict(streams=(1, 2), records=(100,), batch_rows=32, reps=2)
    defaults.update(overrides)
    return BenchConfig(mode=mode, **defaults)


class TestBenchConfig:
    def test_valid(self):
        config = small_config("get")
        assert config.reps == 2

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            small_config("push")

    @pytest.mark.parametrize(
        "overrides",
        [
            {"streams": ()},
            {"records": ()},
            {"streams": (0, 1)},
            {"records": (-5,)},
            {"batch_rows": 0},
            {"reps": 0},
        ],
    )
    def test_counts_must_be_positive(self, overrides):
        with pytest.raises(ValueError):
            small_config("get", **overrides)

    def test_streams_sorted(self):
        config = small_config("get", streams=(8, 1, 4))
        assert config.streams == (1, 4, 8)

    def test_mode_routing_enforced(self):
        with pytest.raises(ValueError):
            run_flight_bench(small_config("tcp-baseline"))
        with pytest.raises(ValueError):
            run_tcp_baseline(small_config("get"))


class TestCsv:
    def test_header_text(self):
        assert CSV_HEADER == (
            "mode,streams,records_per_stream,records_per_batch,"
            "bytes_total,seconds_median,throughput_mbps"
        )

    def test_row_formatting(self):
        row = BenchRow("get", 2, 1000, 64, 64000, 0.125, 0.512)
        text = emit_csv([row])
        assert text == CSV_HEADER + "\nget,2,1000,64,64000,0.125,0.51\n"

    def test_seconds_survive_reparse_exactly(self):
        # repr of a float round-trips, so the median is recoverable verbatim
        row = BenchRow("get", 1, 10, 4, 320, 0.018302583694458008, 17.48386)
        line = emit_csv([row]).splitlines()[1]
        assert float(line.split(",")[5]) == row.seconds_median

    def test_rows_sorted_by_mode_streams_records(self):
        rows = [
            BenchRow("put", 1, 10, 4, 320, 1.0, 0.00032),
            BenchRow("get", 4, 10, 4, 1280, 1.0, 0.00128),
            BenchRow("get", 1, 20, 4, 640, 1.0, 0.00064),
            BenchRow("get", 1, 10, 4, 320, 1.0, 0.00032),
        ]
        lines = emit_csv(rows).splitlines()[1:]
        heads = [tuple(line.split(",")[:3]) for line in lines]
        assert heads == [
            ("get", "1", "10"),
            ("get", "1", "20"),
            ("get", "4", "10"),
            ("put", "1", "10"),
        ]

    def test_parses_as_csv(self):
        rows = [BenchRow("get", 2, 50, 8, 3200, 0.25, 0.0128)]
        parsed = list(csv.reader(io.StringIO(emit_csv(rows))))
        assert parsed[0] == CSV_HEADER.split(",")
        assert len(parsed) == 2
        assert all(len(record) == 7 for record in parsed)


class TestGetMode:
    def test_sweep(self):
        rows = run_flight_bench(small_config("get"))
        assert [r.streams for r in rows] == [1, 2]
        for row in rows:
            assert row.mode == "get"
            assert row.records_per_stream == 100
            assert row.records_per_batch == 32
            assert row.bytes_total == RECORD_BYTES * row.streams * 100
            assert row.seconds_median > 0
            # throughput is definitional, no rounding inside the row
            assert row.throughput_mbps == row.bytes_total / 1e6 / row.seconds_median

    def test_against_external_server(self):
        with FlightServer(endpoint_count=2, perf_batch_rows=32) as server:
            config = small_config(
                "get", streams=(2,), server=(server.host, server.port)
            )
            rows = run_flight_bench(config)
        assert len(rows) == 1
        assert rows[0].bytes_total == RECORD_BYTES * 200


class TestPutMode:
    def test_sweep(self):
        rows = run_flight_bench(small_config("put", records=(64,)))
        assert [r.streams for r in rows] == [1, 2]
        for row in rows:
            assert row.mode == "put"
            assert row.bytes_total == RECORD_BYTES * row.streams * 64
            assert row.throughput_mbps == row.bytes_total / 1e6 / row.seconds_median


class TestBaseline:
    def test_sweep(self):
        config = small_config("tcp-baseline", records=(5000,), batch_rows=64)
        rows = run_tcp_baseline(config)
        assert [r.streams for r in rows] == [1, 2]
        for row in rows:
            assert row.mode == "tcp-baseline"
            assert row.bytes_total == RECORD_BYTES * row.streams * 5000
            assert row.seconds_median > 0


class TestEfficiencyRatios:
    def test_matching_cells_only(self):
        flight = [
            BenchRow("get", 1, 10, 4, 320, 0.5, 800.0),
            BenchRow("get", 2, 10, 4, 640, 0.5, 900.0),
        ]
        baseline = [
            BenchRow("tcp-baseline", 1, 10, 4, 320, 0.5, 1000.0),
            BenchRow("tcp-baseline", 4, 10, 4, 1280, 0.5, 1000.0),
        ]
        ratios = efficiency_ratios(flight, baseline)
        assert ratios == [(1, 10, 0.8)]

    def test_empty_when_nothing_matches(self):
        assert efficiency_ratios([], []) == []


class TestCli:
    def test_get_run_writes_csv(self, tmp_path):
        out = tmp_path / "rows.csv"
        code = main([
            "--mode", "get",
            "--streams", "1",
            "--records", "50",
            "--batch-rows", "25",
            "--reps", "1",
            "--csv", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 2
        assert lines[1].startswith("get,1,50,25,1600,")

    def test_stdout_default(self, capsys):
        code = main([
            "--mode", "tcp-baseline",
            "--streams", "1",
            "--records", "100",
            "--batch-rows", "50",
            "--reps", "1",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert out.startswith(CSV_HEADER + "\n")

    def test_invalid_counts_exit_1(self, capsys):
        code = main([
            "--mode", "get",
            "--streams", "0",
            "--records", "10",
            "--batch-rows", "4",
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_argparse_rejects_garbage(self):
        with pytest.raises(SystemExit):
            main(["--mode", "get", "--records", "ten", "--batch-rows", "4"])

    def test_mode_required(self):
        with pytest.raises(SystemExit):
            main(["--records", "10", "--batch-rows", "4"])

    def test_modes_constant(self):
        assert MODES == ("get", "put", "tcp-baseline")
