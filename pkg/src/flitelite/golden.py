"""Golden-file dump utility.

Writes deterministic pairs of files per case: a .fltl byte stream holding
SCHEMA / BATCH* / EOS frames exactly as a download stream would carry them,
and a .json sidecar with the schema and expected cell values. Independent
decoders check themselves against these without a live server.

JSON cell conventions: Int64 cells are decimal strings (to survive readers
whose native numbers are 64-bit floats), Int32 and Float64 are JSON numbers,
Utf8 is a string, null marks an absent cell.
"""

from __future__ import annotations

import argparse
import json
import os
import random
from typing import List, Optional, Sequence

from .columnar import (
    INT32_MAX,
    INT32_MIN,
    INT64_MAX,
    INT64_MIN,
    DataType,
    Field,
    RecordBatch,
    Schema,
    batch_cells,
    batch_from_arrays,
    build_array,
)
from .ipc import MsgType, encode_batch, encode_schema, frame

_TYPE_NAMES = {
    DataType.INT32: "int32",
    DataType.INT64: "int64",
    DataType.FLOAT64: "float64",
    DataType.UTF8: "utf8",
}

_STRINGS = (
    "", "a", "bk", "points", "velocity", "héllo", "naïve",
    "日本語", "\U0001f680\U0001f680", "line\nbreak", "tab\tchar",
    "it's", "zero\x00free-not",  # NUL is legal inside Utf8 values
)

_FLOATS = (0.0, -0.0, 1.5, -2.25, 5.7866, 3.14, 1e300, -1e-300, 2**53 + 1.0)

_NAME_POOL = ("a", "b", "c", "id", "score", "label", "ts", "värde", "n0")


def _random_cell(rng: random.Random, dtype: DataType):
    if dtype == DataType.INT32:
        if rng.random() < 0.1:
            return rng.choice((INT32_MIN, INT32_MAX, 0, -1))
        return rng.randint(-10**6, 10**6)
    if dtype == DataType.INT64:
        if rng.random() < 0.1:
            return rng.choice((INT64_MIN, INT64_MAX, 0, -1))
        return rng.randint(-(10**15), 10**15)
    if dtype == DataType.FLOAT64:
        if rng.random() < 0.25:
            return rng.choice(_FLOATS)
        return rng.uniform(-1e6, 1e6)
    if rng.random() < 0.5:
        return rng.choice(_STRINGS)
    return "".join(rng.choice("abcdefghij éü") for _ in range(rng.randint(1, 24)))


def _random_schema(rng: random.Random) -> Schema:
    count = rng.randint(1, 6)
    names = rng.sample(_NAME_POOL, count)
    return Schema(
        [
            Field(name, rng.choice(list(DataType)), nullable=rng.random() < 0.5)
            for name in names
        ]
    )


def _random_batch(rng: random.Random, schema: Schema, rows: int) -> RecordBatch:
    columns = []
    for field in schema.fields:
        cells = []
        for _ in range(rows):
            if field.nullable and rng.random() < 0.2:
                cells.append(None)
            else:
                cells.append(_random_cell(rng, field.dtype))
        columns.append(build_array(field, cells))
    return batch_from_arrays(schema, columns)


def _fixed_cases() -> List[tuple]:
    """Hand-picked edge cases that every corpus should contain."""
    mixed = Schema(
        [
            Field("a", DataType.INT64, nullable=True),
            Field("b", DataType.UTF8),
            Field("c", DataType.FLOAT64),
        ]
    )
    mixed_batch = batch_from_arrays(
        mixed,
        [
            build_array(mixed.fields[0], [7, None, -7]),
            build_array(mixed.fields[1], ["one", "", "three"]),
            build_array(mixed.fields[2], [0.5, -0.0, 1e300]),
        ],
    )
    empty_schema = Schema([Field("s", DataType.UTF8, nullable=True)])
    zero_row = batch_from_arrays(
        empty_schema, [build_array(empty_schema.fields[0], [])]
    )
    extremes = Schema([Field("lo", DataType.INT64), Field("hi", DataType.INT64)])
    extreme_batch = batch_from_arrays(
        extremes,
        [
            build_array(extremes.fields[0], [INT64_MIN, 0]),
            build_array(extremes.fields[1], [INT64_MAX, -1]),
        ],
    )
    all_null = Schema([Field("n", DataType.INT32, nullable=True)])
    all_null_batch = batch_from_arrays(
        all_null, [build_array(all_null.fields[0], [None, None, None])]
    )
    return [
        (mixed, [mixed_batch]),
        (empty_schema, []),  # schema-only stream
        (empty_schema, [zero_row]),
        (extremes, [extreme_batch]),
        (all_null, [all_null_batch]),
    ]


def _json_cell(dtype: DataType, cell):
    if cell is None:
        return None
    if dtype == DataType.INT64:
        return str(cell)
    return cell


def case_files(schema: Schema, batches: Sequence[RecordBatch]):
    """Returns (stream_bytes, sidecar_text) for one case."""
    frames = [frame(MsgType.SCHEMA, encode_schema(schema))]
    for batch in batches:
        msg = encode_batch(batch)
        frames.append(frame(MsgType.BATCH, msg.payload))
    frames.append(frame(MsgType.EOS))
    rows = []
    for batch in batches:
        for row in batch_cells(batch):
            rows.append(
                [
                    _json_cell(field.dtype, cell)
                    for field, cell in zip(schema.fields, row)
                ]
            )
    sidecar = {
        "schema": [
            {
                "name": f.name,
                "type": _TYPE_NAMES[f.dtype],
                "nullable": f.nullable,
            }
            for f in schema.fields
        ],
        "batch_rows": [b.num_rows for b in batches],
        "rows": rows,
    }
    text = json.dumps(sidecar, ensure_ascii=True, separators=(",", ":"))
    return b"".join(frames), text


def write_corpus(out_dir: str, count: int, seed: int) -> List[str]:
    """Writes `count` case pairs into out_dir; returns the case basenames."""
    if count < 1:
        raise ValueError("count must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    rng = random.Random(seed)
    cases = _fixed_cases()[:count]
    while len(cases) < count:
        schema = _random_schema(rng)
        batch_count = rng.choice((0, 1, 1, 2, 3, 4))
        sizes = [rng.choice((0, 1, 2, 3, 5, 8, 13, 40)) for _ in range(batch_count)]
        cases.append((schema, [_random_batch(rng, schema, n) for n in sizes]))
    names = []
    for index, (schema, batches) in enumerate(cases):
        base = f"case_{index:03d}"
        stream, sidecar = case_files(schema, batches)
        with open(os.path.join(out_dir, base + ".fltl"), "wb") as fh:
            fh.write(stream)
        with open(os.path.join(out_dir, base + ".json"), "w", encoding="utf-8") as fh:
            fh.write(sidecar + "\n")
        names.append(base)
    return names


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flitelite-golden",
        description="Write a deterministic golden corpus of framed batch streams.",
    )
    parser.add_argument("--out", required=True)
    parser.add_argument("--count", type=int, default=64)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    names = write_corpus(args.out, args.count, args.seed)
    print(f"wrote {len(names)} cases to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
