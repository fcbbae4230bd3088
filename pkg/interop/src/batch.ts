/**
 * Batch payload: `u64le num_rows | u32le buffer_count` then buffer_count
 * descriptors `(u64le offset, u64le length)` and the body. Offsets are
 * relative to the body start, each congruent to 0 mod 64. Per field the
 * buffers appear as validity (nullable fields only), offsets (Utf8 only),
 * then values; the body may carry zero padding between and after buffers.
 */

import { DataType, Field, Schema } from "./schema.js";
import { Cursor, DecodeError, decodeUtf8 } from "./wire.js";

export type Cell = number | bigint | string | null;

export interface Column {
  field: Field;
  validity: Buffer | null;
  offsets: Buffer | null;
  values: Buffer;
}

export interface Batch {
  numRows: number;
  columns: Column[];
}

function validBit(validity: Buffer, row: number): boolean {
  const byte = validity[row >> 3];
  return byte === undefined ? false : (byte & (1 << (row & 7))) !== 0;
}

export function columnCell(column: Column, numRows: number, row: number): Cell {
  if (row < 0 || row >= numRows) {
    throw new RangeError(`row ${row} out of range 0..${numRows - 1}`);
  }
  if (column.validity !== null && !validBit(column.validity, row)) {
    return null;
  }
  switch (column.field.dtype) {
    case DataType.Int32:
      return column.values.readInt32LE(4 * row);
    case DataType.Int64:
      return column.values.readBigInt64LE(8 * row);
    case DataType.Float64:
      return column.values.readDoubleLE(8 * row);
    default: {
      const start = column.offsets!.readInt32LE(4 * row);
      const end = column.offsets!.readInt32LE(4 * row + 4);
      return decodeUtf8(column.values.subarray(start, end), start);
    }
  }
}

export function batchRows(batch: Batch): Cell[][] {
  const rows: Cell[][] = [];
  for (let r = 0; r < batch.numRows; r++) {
    rows.push(batch.columns.map((col) => columnCell(col, batch.numRows, r)));
  }
  return rows;
}

interface Descriptor {
  offset: number;
  length: number;
}

function asSafeNumber(value: bigint, what: string, at: number): number {
  if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new DecodeError(`${what} ${value} is implausibly large`, at);
  }
  return Number(value);
}

export function decodeBatch(payload: Buffer, schema: Schema): Batch {
  const cur = new Cursor(payload);
  const numRows = asSafeNumber(cur.u64(), "row count", 0);
  const bufferCount = cur.u32();

  let expected = 0;
  for (const field of schema.fields) {
    expected += 1 + (field.nullable ? 1 : 0) + (field.dtype === DataType.Utf8 ? 1 : 0);
  }
  if (bufferCount !== expected) {
    throw new DecodeError(
      `schema needs ${expected} buffers, batch declares ${bufferCount}`,
      8,
    );
  }

  const descriptors: Descriptor[] = [];
  let lastEnd = 0;
  for (let i = 0; i < bufferCount; i++) {
    const at = cur.pos;
    const offset = asSafeNumber(cur.u64(), "buffer offset", at);
    const length = asSafeNumber(cur.u64(), "buffer length", at + 8);
    if (offset % 64 !== 0) {
      throw new DecodeError(`buffer offset ${offset} is not 64-byte aligned`, at);
    }
    if (offset < lastEnd) {
      throw new DecodeError(`buffer ${i} overlaps its predecessor`, at);
    }
    lastEnd = offset + length;
    descriptors.push({ offset, length });
  }

  const body = payload.subarray(cur.pos);
  const bodyAt = cur.pos;
  if (lastEnd > body.length) {
    throw new DecodeError(
      `buffers need ${lastEnd} body bytes, payload carries ${body.length}`,
      bodyAt,
    );
  }

  const validityBytes = Math.ceil(numRows / 8);
  let next = 0;
  const take = (want: number, what: string): Buffer => {
    const d = descriptors[next++]!;
    if (d.length !== want) {
      throw new DecodeError(
        `${what} must be ${want} bytes, descriptor says ${d.length}`,
        12 + 16 * (next - 1),
      );
    }
    return body.subarray(d.offset, d.offset + d.length);
  };

  const columns: Column[] = [];
  for (const field of schema.fields) {
    const validity = field.nullable ? take(validityBytes, `${field.name} validity`) : null;
    let offsets: Buffer | null = null;
    let values: Buffer;
    if (field.dtype === DataType.Utf8) {
      offsets = take(4 * (numRows + 1), `${field.name} offsets`);
      let prev = offsets.readInt32LE(0);
      if (prev !== 0) {
        throw new DecodeError(`${field.name} offsets must start at 0`, bodyAt);
      }
      for (let r = 1; r <= numRows; r++) {
        const it = offsets.readInt32LE(4 * r);
        if (it < prev) {
          throw new DecodeError(`${field.name} offsets must be non-decreasing`, bodyAt);
        }
        prev = it;
      }
      values = take(prev, `${field.name} values`);
    } else {
      const width = field.dtype === DataType.Int32 ? 4 : 8;
      values = take(width * numRows, `${field.name} values`);
    }
    columns.push({ field, validity, offsets, values });
  }
  return { numRows, columns };
}

/** Sum of the meaningful buffer bytes, excluding alignment padding. */
export function batchByteSize(batch: Batch): number {
  let total = 0;
  for (const col of batch.columns) {
    total += col.validity?.length ?? 0;
    total += col.offsets?.length ?? 0;
    total += col.values.length;
  }
  return total;
}
