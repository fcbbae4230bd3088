import io
import json
import math
import struct

import pytest

from flitelite.columnar import DataType, Field, Schema, batch_cells, build_array, batch_from_arrays
from flitelite.golden import case_files, main, write_corpus
from flitelite.ipc import MsgType, decode_batch, decode_schema, read_message

TYPE_BY_NAME = {
    "int32": DataType.INT32,
    "int64": DataType.INT64,
    "float64": DataType.FLOAT64,
    "utf8": DataType.UTF8,
}


def decode_stream(data: bytes):
    """Independent re-read of a dumped stream: (schema, [batches])."""
    reader = io.BytesIO(data)
    first = read_message(reader)
    assert first.msg_type == MsgType.SCHEMA
    schema = decode_schema(first.payload)
    batches = []
    while True:
        msg = read_message(reader)
        if msg.msg_type == MsgType.EOS:
            break
        assert msg.msg_type == MsgType.BATCH
        batches.append(decode_batch(msg, schema))
    assert reader.read() == b""
    return schema, batches


def sidecar_matches(schema, batches, sidecar: dict) -> None:
    assert [f.name for f in schema.fields] == [c["name"] for c in sidecar["schema"]]
    assert [f.dtype for f in schema.fields] == [
        TYPE_BY_NAME[c["type"]] for c in sidecar["schema"]
    ]
    assert [f.nullable for f in schema.fields] == [
        c["nullable"] for c in sidecar["schema"]
    ]
    assert [b.num_rows for b in batches] == sidecar["batch_rows"]
    got_rows = [row for b in batches for row in batch_cells(b)]
    assert len(got_rows) == len(sidecar["rows"])
    for got, expected in zip(got_rows, sidecar["rows"]):
        for field, got_cell, exp_cell in zip(schema.fields, got, expected):
            if exp_cell is None:
                assert got_cell is None
            elif field.dtype == DataType.INT64:
                assert isinstance(exp_cell, str)
                assert got_cell == int(exp_cell)
            elif field.dtype == DataType.FLOAT64:
                # exact: the dump must not lose bits, and -0.0 stays signed
                assert struct.pack("<d", got_cell) == struct.pack("<d", exp_cell)
            else:
                assert got_cell == exp_cell


class TestCaseFiles:
    def test_schema_only_stream(self):
        schema = Schema([Field("s", DataType.UTF8, nullable=True)])
        stream, sidecar_text = case_files(schema, [])
        got_schema, got_batches = decode_stream(stream)
        assert got_schema == schema
        assert got_batches == []
        sidecar = json.loads(sidecar_text)
        assert sidecar["batch_rows"] == []
        assert sidecar["rows"] == []

    def test_int64_cells_are_decimal_strings(self):
        schema = Schema([Field("v", DataType.INT64)])
        batch = batch_from_arrays(
            schema, [build_array(schema.fields[0], [2**62, -1])]
        )
        _, sidecar_text = case_files(schema, [batch])
        sidecar = json.loads(sidecar_text)
        assert sidecar["rows"] == [["4611686018427387904"], ["-1"]]

    def test_sidecar_is_ascii_compact(self):
        schema = Schema([Field("héllo", DataType.UTF8)])
        batch = batch_from_arrays(
            schema, [build_array(schema.fields[0], ["日本語"])]
        )
        _, sidecar_text = case_files(schema, [batch])
        assert sidecar_text.isascii()
        assert ": " not in sidecar_text and ", " not in sidecar_text
        assert json.loads(sidecar_text)["rows"] == [["日本語"]]

    def test_negative_zero_round_trips(self):
        schema = Schema([Field("z", DataType.FLOAT64)])
        batch = batch_from_arrays(
            schema, [build_array(schema.fields[0], [-0.0, 1e300])]
        )
        stream, sidecar_text = case_files(schema, [batch])
        _, batches = decode_stream(stream)
        sidecar_matches(schema, batches, json.loads(sidecar_text))
        assert math.copysign(1.0, json.loads(sidecar_text)["rows"][0][0]) == -1.0


class TestWriteCorpus:
    def test_deterministic(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        names_a = write_corpus(str(a), 20, 7)
        names_b = write_corpus(str(b), 20, 7)
        assert names_a == names_b
        for name in names_a:
            for suffix in (".fltl", ".json"):
                assert (a / (name + suffix)).read_bytes() == (
                    b / (name + suffix)
                ).read_bytes()

    def test_seed_changes_content(self, tmp_path):
        write_corpus(str(tmp_path / "a"), 12, 7)
        write_corpus(str(tmp_path / "b"), 12, 8)
        fixed = 5  # hand-picked cases ignore the seed
        diffs = sum(
            (tmp_path / "a" / f"case_{i:03d}.fltl").read_bytes()
            != (tmp_path / "b" / f"case_{i:03d}.fltl").read_bytes()
            for i in range(fixed, 12)
        )
        assert diffs > 0

    def test_count_honored(self, tmp_path):
        names = write_corpus(str(tmp_path), 9, 1)
        assert names == [f"case_{i:03d}" for i in range(9)]
        assert len(list(tmp_path.glob("*.fltl"))) == 9
        assert len(list(tmp_path.glob("*.json"))) == 9

    def test_count_must_be_positive(self, tmp_path):
        with pytest.raises(ValueError):
            write_corpus(str(tmp_path), 0, 1)

    def test_every_case_self_checks(self, tmp_path):
        names = write_corpus(str(tmp_path), 40, 20260818)
        saw_null = saw_int64 = saw_empty_batch = 0
        for name in names:
            stream = (tmp_path / (name + ".fltl")).read_bytes()
            sidecar = json.loads((tmp_path / (name + ".json")).read_text())
            schema, batches = decode_stream(stream)
            sidecar_matches(schema, batches, sidecar)
            saw_null += any(None in row for row in sidecar["rows"])
            saw_int64 += any(c["type"] == "int64" for c in sidecar["schema"])
            saw_empty_batch += 0 in sidecar["batch_rows"]
        # the corpus must actually exercise the interesting shapes
        assert saw_null >= 3
        assert saw_int64 >= 3
        assert saw_empty_batch >= 1

    def test_fixed_cases_lead_the_corpus(self, tmp_path):
        write_corpus(str(tmp_path), 6, 99)
        first = json.loads((tmp_path / "case_000.json").read_text())
        assert [c["name"] for c in first["schema"]] == ["a", "b", "c"]
        assert first["rows"][1][0] is None
        schema_only = json.loads((tmp_path / "case_001.json").read_text())
        assert schema_only["batch_rows"] == []


class TestCli:
    def test_main(self, tmp_path, capsys):
        out = tmp_path / "corpus"
        assert main(["--out", str(out), "--count", "7", "--seed", "3"]) == 0
        assert "wrote 7 cases" in capsys.readouterr().out
        assert len(list(out.glob("*.json"))) == 7
