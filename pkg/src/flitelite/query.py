"""Single-table SELECT parser and evaluator.

Grammar (keywords case-insensitive, whitespace free-form):

    query      := SELECT projection FROM ident [WHERE ident cmp literal]
    projection := '*' | ident (',' ident)*
    cmp        := '=' | '!=' | '<' | '<=' | '>' | '>='
    literal    := integer | decimal | single-quoted string ('' escapes a quote)

Rows whose predicate column is null never match. Output batches mirror input
batch boundaries; batches that filter down to zero rows are dropped.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .columnar import (
    Array,
    DataType,
    RecordBatch,
    Schema,
    array_cells,
    array_get,
    batch_from_arrays,
    build_array,
)
from .errors import QueryError

_KEYWORDS = {"SELECT", "FROM", "WHERE"}

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


@dataclass(frozen=True)
class Comparison:
    column: str
    op: str
    literal: object


@dataclass(frozen=True)
class Query:
    projection: Optional[tuple]  # None means '*'
    source: str
    predicate: Optional[Comparison]


@dataclass(frozen=True)
class _Token:
    kind: str  # IDENT KEYWORD INT FLOAT STRING STAR COMMA OP EOF
    text: str
    value: object
    position: int


def _scan(text: str) -> List[_Token]:
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        start = i
        if c.isalpha() or c == "_":
            i += 1
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            if word.upper() in _KEYWORDS:
                tokens.append(_Token("KEYWORD", word.upper(), word.upper(), start))
            else:
                tokens.append(_Token("IDENT", word, word, start))
        elif c.isdigit() or (c == "-" and i + 1 < n and text[i + 1].isdigit()):
            i += 1
            while i < n and text[i].isdigit():
                i += 1
            if i + 1 < n and text[i] == "." and text[i + 1].isdigit():
                i += 2
                while i < n and text[i].isdigit():
                    i += 1
                tokens.append(_Token("FLOAT", text[start:i], float(text[start:i]), start))
            elif i < n and text[i] == ".":
                raise QueryError(
                    f"digits must follow the decimal point at position {i}",
                    position=i,
                    expected={"digit"},
                )
            else:
                tokens.append(_Token("INT", text[start:i], int(text[start:i]), start))
        elif c == "'":
            i += 1
            pieces = []
            while True:
                if i >= n:
                    raise QueryError(
                        f"unterminated string starting at position {start}",
                        position=start,
                        expected={"'"},
                    )
                if text[i] == "'":
                    if i + 1 < n and text[i + 1] == "'":
                        pieces.append("'")
                        i += 2
                        continue
                    i += 1
                    break
                pieces.append(text[i])
                i += 1
            tokens.append(_Token("STRING", text[start:i], "".join(pieces), start))
        elif c == "*":
            tokens.append(_Token("STAR", "*", "*", start))
            i += 1
        elif c == ",":
            tokens.append(_Token("COMMA", ",", ",", start))
            i += 1
        elif c in "<>":
            if i + 1 < n and text[i + 1] == "=":
                tokens.append(_Token("OP", c + "=", c + "=", start))
                i += 2
            else:
                tokens.append(_Token("OP", c, c, start))
                i += 1
        elif c == "=":
            tokens.append(_Token("OP", "=", "=", start))
            i += 1
        elif c == "!":
            if i + 1 < n and text[i + 1] == "=":
                tokens.append(_Token("OP", "!=", "!=", start))
                i += 2
            else:
                raise QueryError(
                    f"lone '!' at position {start}", position=start, expected={"!="}
                )
        else:
            raise QueryError(
                f"unexpected character {c!r} at position {start}",
                position=start,
                expected=set(),
            )
    tokens.append(_Token("EOF", "", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens: List[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_keyword(self, word: str) -> None:
        tok = self.peek()
        if tok.kind != "KEYWORD" or tok.value != word:
            raise QueryError(
                f"expected {word} at position {tok.position}, got {tok.text or 'end of input'!r}",
                position=tok.position,
                expected={word},
            )
        self.advance()

    def expect_ident(self, what: str) -> str:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise QueryError(
                f"expected {what} at position {tok.position}, "
                f"got {tok.text or 'end of input'!r}",
                position=tok.position,
                expected={what},
            )
        self.advance()
        return tok.value


def parse_query(text: str) -> Query:
    parser = _Parser(_scan(text))
    parser.expect_keyword("SELECT")

    tok = parser.peek()
    if tok.kind == "STAR":
        parser.advance()
        projection = None
    else:
        names = [parser.expect_ident("column name or '*'")]
        while parser.peek().kind == "COMMA":
            parser.advance()
            names.append(parser.expect_ident("column name"))
        projection = tuple(names)

    parser.expect_keyword("FROM")
    source = parser.expect_ident("dataset name")

    predicate = None
    tok = parser.peek()
    if tok.kind == "KEYWORD" and tok.value == "WHERE":
        parser.advance()
        column = parser.expect_ident("column name")
        op_tok = parser.peek()
        if op_tok.kind != "OP":
            raise QueryError(
                f"expected comparison operator at position {op_tok.position}",
                position=op_tok.position,
                expected=set(_OPS),
            )
        parser.advance()
        lit_tok = parser.peek()
        if lit_tok.kind not in ("INT", "FLOAT", "STRING"):
            raise QueryError(
                f"expected literal at position {lit_tok.position}",
                position=lit_tok.position,
                expected={"integer", "decimal", "string"},
            )
        parser.advance()
        predicate = Comparison(column, op_tok.value, lit_tok.value)

    tail = parser.peek()
    if tail.kind != "EOF":
        raise QueryError(
            f"unexpected {tail.text!r} after query at position {tail.position}",
            position=tail.position,
            expected={"end of input"},
        )
    return Query(projection, source, predicate)


def _literal_matches(dtype: DataType, literal) -> bool:
    if isinstance(literal, int):
        return dtype in (DataType.INT32, DataType.INT64)
    if isinstance(literal, float):
        return dtype is DataType.FLOAT64
    return dtype is DataType.UTF8


def _analyze(query: Query, schema: Schema) -> Tuple[Optional[list], Optional[tuple]]:
    """Resolve names against a schema; returns (projection indexes, predicate).

    Projection indexes are None for '*'. The predicate triple is
    (column index, comparator function, literal).
    """
    if query.projection is None:
        indexes = None
    else:
        indexes = []
        seen = set()
        for name in query.projection:
            if name in seen:
                raise QueryError(f"column {name!r} appears twice in projection")
            seen.add(name)
            idx = schema.index_of(name)
            if idx is None:
                raise QueryError(f"unknown column {name!r}")
            indexes.append(idx)

    predicate = None
    if query.predicate is not None:
        pred = query.predicate
        idx = schema.index_of(pred.column)
        if idx is None:
            raise QueryError(f"unknown column {pred.column!r}")
        dtype = schema.fields[idx].dtype
        if not _literal_matches(dtype, pred.literal):
            raise QueryError(
                f"literal {pred.literal!r} cannot compare against "
                f"{dtype.name} column {pred.column!r}"
            )
        predicate = (idx, _OPS[pred.op], pred.literal)
    return indexes, predicate


def projected_schema(query: Query, schema: Schema) -> Schema:
    """Output schema for a query, validating names and literal types."""
    indexes, _ = _analyze(query, schema)
    if indexes is None:
        return schema
    return Schema([schema.fields[i] for i in indexes])


def execute_query(
    query: Query, schema: Schema, batches: Sequence[RecordBatch]
) -> Tuple[Schema, list]:
    """Run a parsed query over a dataset's batches.

    Predicate-free projections reuse the input Array objects untouched, so
    surviving output batches stay byte-identical per batch.
    """
    indexes, predicate = _analyze(query, schema)
    if indexes is None:
        out_schema = schema
        out_fields = list(schema.fields)
        picked = list(range(len(schema.fields)))
    else:
        out_fields = [schema.fields[i] for i in indexes]
        out_schema = Schema(out_fields)
        picked = indexes

    out_batches = []
    for batch in batches:
        if predicate is None:
            if batch.num_rows == 0:
                continue
            columns = tuple(batch.columns[i] for i in picked)
            out_batches.append(batch_from_arrays(out_schema, columns))
            continue
        pred_idx, compare, literal = predicate
        keep = [
            i
            for i, cell in enumerate(array_cells(batch.columns[pred_idx]))
            if cell is not None and compare(cell, literal)
        ]
        if not keep:
            continue
        columns = []
        for field, src_idx in zip(out_fields, picked):
            src = batch.columns[src_idx]
            columns.append(build_array(field, [array_get(src, i) for i in keep]))
        out_batches.append(batch_from_arrays(out_schema, tuple(columns)))
    return out_schema, out_batches
