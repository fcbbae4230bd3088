/**
 * Schema payload: `u16le field_count` then per field
 * `u16le name_len | name UTF-8 | u8 type | u8 nullable`.
 */

import { Cursor, DecodeError } from "./wire.js";

export const DataType = {
  Int32: 1,
  Int64: 2,
  Float64: 3,
  Utf8: 4,
} as const;

export type DataTypeValue = (typeof DataType)[keyof typeof DataType];

export const TYPE_NAMES: Record<number, string> = {
  1: "int32",
  2: "int64",
  3: "float64",
  4: "utf8",
};

export interface Field {
  name: string;
  dtype: DataTypeValue;
  nullable: boolean;
}

export interface Schema {
  fields: Field[];
}

export function decodeSchema(payload: Buffer): Schema {
  const cur = new Cursor(payload);
  const count = cur.u16();
  if (count === 0) {
    throw new DecodeError("schema must declare at least one field", 0);
  }
  const fields: Field[] = [];
  const seen = new Set<string>();
  for (let i = 0; i < count; i++) {
    const nameLen = cur.u16();
    const nameAt = cur.pos;
    const name = cur.utf8(nameLen);
    if (name.length === 0) {
      throw new DecodeError("empty field name", nameAt);
    }
    if (seen.has(name)) {
      throw new DecodeError(`duplicate field name ${JSON.stringify(name)}`, nameAt);
    }
    seen.add(name);
    const typeAt = cur.pos;
    const dtype = cur.u8();
    if (dtype < 1 || dtype > 4) {
      throw new DecodeError(`unknown data type tag ${dtype}`, typeAt);
    }
    const nullableAt = cur.pos;
    const nullable = cur.u8();
    if (nullable > 1) {
      throw new DecodeError(`nullable flag must be 0 or 1, got ${nullable}`, nullableAt);
    }
    fields.push({ name, dtype: dtype as DataTypeValue, nullable: nullable === 1 });
  }
  cur.finish();
  return { fields };
}
