"""flitelite: a miniature columnar batch format and a streaming transfer
protocol over TCP, with a server, client, small query engine, and benchmark
harness."""

from .columnar import (
    Array,
    DataType,
    Dataset,
    Field,
    RecordBatch,
    Schema,
    array_cells,
    array_get,
    batch_byte_size,
    batch_cells,
    batch_from_arrays,
    build_array,
)
from .errors import (
    ConnectFailed,
    ConnectionClosed,
    FliteError,
    InternalError,
    Malformed,
    NotFound,
    ProtocolViolation,
    QueryError,
    SchemaMismatch,
)
from .ipc import (
    DEFAULT_FRAME_CAP,
    MsgType,
    WireMessage,
    decode_batch,
    decode_schema,
    encode_batch,
    encode_schema,
    frame,
    read_message,
)
from .query import Query, execute_query, parse_query, projected_schema
from .wire import (
    FlightDescriptor,
    FlightInfo,
    PutResult,
    SessionValidator,
    Ticket,
    validate_transcript,
)
from .client import ArenaPool, BufferArena, FlightClient, TransferStats
from .server import FlightServer

__version__ = "0.1.0"

__all__ = [
    "Array",
    "ArenaPool",
    "BufferArena",
    "ConnectFailed",
    "ConnectionClosed",
    "DataType",
    "Dataset",
    "DEFAULT_FRAME_CAP",
    "Field",
    "FliteError",
    "FlightClient",
    "FlightDescriptor",
    "FlightInfo",
    "FlightServer",
    "InternalError",
    "Malformed",
    "MsgType",
    "NotFound",
    "ProtocolViolation",
    "PutResult",
    "Query",
    "QueryError",
    "RecordBatch",
    "Schema",
    "SchemaMismatch",
    "SessionValidator",
    "Ticket",
    "TransferStats",
    "WireMessage",
    "array_cells",
    "array_get",
    "batch_byte_size",
    "batch_cells",
    "batch_from_arrays",
    "build_array",
    "decode_batch",
    "decode_schema",
    "encode_batch",
    "encode_schema",
    "execute_query",
    "frame",
    "parse_query",
    "projected_schema",
    "read_message",
    "validate_transcript",
]
