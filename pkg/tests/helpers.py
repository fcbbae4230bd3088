"""Seeded data generators shared across the test modules.

Everything here is driven by an explicit random.Random so failures
reproduce exactly; no module-level randomness.
"""

from __future__ import annotations

import random
from typing import List, Optional, Tuple

from flitelite.columnar import (
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

NAME_POOL = (
    "a", "b", "c", "d", "id", "score", "label", "ts", "n0", "n1",
    "wide_name", "värde",
)

STRING_POOL = (
    "", "x", "yz", "hello", "wor'ld", "héllo", "日本",
    "\U0001f680", "multi word", "trailing ",
)


def random_cell(rng: random.Random, dtype: DataType):
    if dtype == DataType.INT32:
        if rng.random() < 0.08:
            return rng.choice((INT32_MIN, INT32_MAX, 0, -1, 1))
        return rng.randint(-(10**6), 10**6)
    if dtype == DataType.INT64:
        if rng.random() < 0.08:
            return rng.choice((INT64_MIN, INT64_MAX, 0, -1, 1))
        return rng.randint(-(10**12), 10**12)
    if dtype == DataType.FLOAT64:
        if rng.random() < 0.15:
            return rng.choice((0.0, -0.0, 1.5, -2.25, 1e300, -1e-300))
        return rng.uniform(-1e6, 1e6)
    if rng.random() < 0.4:
        return rng.choice(STRING_POOL)
    return "".join(rng.choice("abcde é") for _ in range(rng.randint(1, 12)))


def random_schema(rng: random.Random, max_fields: int = 5) -> Schema:
    count = rng.randint(1, max_fields)
    names = rng.sample(NAME_POOL, count)
    return Schema(
        [
            Field(name, rng.choice(list(DataType)), nullable=rng.random() < 0.5)
            for name in names
        ]
    )


def random_column_cells(
    rng: random.Random, field: Field, rows: int, null_rate: float = 0.2
) -> List:
    cells = []
    for _ in range(rows):
        if field.nullable and rng.random() < null_rate:
            cells.append(None)
        else:
            cells.append(random_cell(rng, field.dtype))
    return cells


def random_batch(rng: random.Random, schema: Schema, rows: int) -> RecordBatch:
    return batch_from_arrays(
        schema,
        [
            build_array(field, random_column_cells(rng, field, rows))
            for field in schema.fields
        ],
    )


def random_batches(
    rng: random.Random,
    schema: Schema,
    max_batches: int = 6,
    max_rows: int = 60,
    total_rows: Optional[int] = None,
) -> List[RecordBatch]:
    if total_rows is not None:
        sizes = []
        remaining = total_rows
        while remaining > 0:
            n = min(remaining, rng.randint(1, max_rows))
            sizes.append(n)
            remaining -= n
    else:
        sizes = [
            rng.choice((0, 1, 2, rng.randint(3, max_rows)))
            for _ in range(rng.randint(0, max_batches))
        ]
    return [random_batch(rng, schema, n) for n in sizes]


def random_dataset(
    rng: random.Random, max_batches: int = 6, max_rows: int = 60
) -> Tuple[Schema, List[RecordBatch]]:
    schema = random_schema(rng)
    return schema, random_batches(rng, schema, max_batches, max_rows)


def _literal_text(rng: random.Random, dtype: DataType, cells: List) -> str:
    if dtype == DataType.FLOAT64:
        return f"{rng.uniform(-50.0, 50.0):.4f}"
    if dtype in (DataType.INT32, DataType.INT64):
        pool = [c for c in cells if c is not None]
        if pool and rng.random() < 0.5:
            return str(rng.choice(pool))
        return str(rng.randint(-100, 100))
    pool = [c for c in cells if c is not None]
    value = rng.choice(pool) if pool and rng.random() < 0.5 else rng.choice(STRING_POOL)
    return "'" + value.replace("'", "''") + "'"


def random_query_text(rng: random.Random, schema: Schema, batches) -> str:
    """A grammatical query over `schema`; literals often hit real cells."""
    names = list(schema.names)
    if rng.random() < 0.3:
        projection = "*"
    else:
        count = rng.randint(1, len(names))
        projection = ", ".join(rng.sample(names, count))
    text = f"SELECT {projection} FROM t"
    if rng.random() < 0.7:
        index = rng.randrange(len(names))
        field = schema.fields[index]
        cells = [row[index] for b in batches for row in batch_cells(b)]
        op = rng.choice(["=", "!=", "<", "<=", ">", ">="])
        text += f" WHERE {field.name} {op} {_literal_text(rng, field.dtype, cells)}"
    return text
