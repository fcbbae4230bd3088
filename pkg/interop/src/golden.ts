/**
 * Offline conformance: each corpus case pairs a .fltl byte stream
 * (SCHEMA / BATCH* / EOS frames, exactly as a download would arrive)
 * with a .json sidecar naming the schema and the expected cells. The
 * checker decodes the stream with this package's own codec and diffs
 * every cell, so wire compatibility is provable without a live server.
 *
 * Sidecar cell conventions: Int64 is a decimal string, Int32 and
 * Float64 are JSON numbers, Utf8 is a string, null marks an absent cell.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Batch, batchRows, Cell, decodeBatch } from "./batch.js";
import { framesFromBuffer, MsgType } from "./frames.js";
import { decodeSchema, Schema, TYPE_NAMES } from "./schema.js";
import { DecodeError } from "./wire.js";

interface SidecarField {
  name: string;
  type: string;
  nullable: boolean;
}

interface Sidecar {
  schema: SidecarField[];
  batch_rows: number[];
  rows: (string | number | null)[][];
}

export interface GoldenReport {
  casesChecked: number;
  failures: string[];
}

function decodeStream(data: Buffer): { schema: Schema; batches: Batch[] } {
  const frames = framesFromBuffer(data);
  if (frames.length === 0 || frames[0]!.msgType !== MsgType.SCHEMA) {
    throw new DecodeError("stream must open with a SCHEMA frame", 0);
  }
  const last = frames[frames.length - 1]!;
  if (last.msgType !== MsgType.EOS || last.payload.length !== 0) {
    throw new DecodeError("stream must end with an empty EOS frame", data.length);
  }
  const schema = decodeSchema(frames[0]!.payload);
  const batches: Batch[] = [];
  for (const frame of frames.slice(1, -1)) {
    if (frame.msgType !== MsgType.BATCH) {
      throw new DecodeError(
        `unexpected message type 0x${frame.msgType.toString(16)} inside stream`,
        0,
      );
    }
    batches.push(decodeBatch(frame.payload, schema));
  }
  return { schema, batches };
}

function cellMatches(expected: string | number | null, actual: Cell): boolean {
  if (expected === null || actual === null) {
    return expected === null && actual === null;
  }
  if (typeof actual === "bigint") {
    return typeof expected === "string" && BigInt(expected) === actual;
  }
  if (typeof actual === "number") {
    // Object.is keeps -0.0 distinct from 0.0; both sides came through
    // exact double round-trips, so plain equality is otherwise enough.
    return typeof expected === "number" && Object.is(expected, actual);
  }
  return expected === actual;
}

function formatCell(cell: Cell | string | number): string {
  if (cell === null) return "null";
  if (typeof cell === "number" && Object.is(cell, -0)) return "-0";
  return typeof cell === "string" ? JSON.stringify(cell) : String(cell);
}

export function checkGoldenCase(streamPath: string, sidecarPath: string): string[] {
  const problems: string[] = [];
  const sidecar = JSON.parse(fs.readFileSync(sidecarPath, "utf8")) as Sidecar;
  let decoded: { schema: Schema; batches: Batch[] };
  try {
    decoded = decodeStream(fs.readFileSync(streamPath));
  } catch (err) {
    return [`stream does not decode: ${(err as Error).message}`];
  }

  const fields = decoded.schema.fields;
  if (fields.length !== sidecar.schema.length) {
    return [`schema has ${fields.length} fields, sidecar lists ${sidecar.schema.length}`];
  }
  fields.forEach((field, i) => {
    const want = sidecar.schema[i]!;
    if (field.name !== want.name) {
      problems.push(`field ${i} is named ${field.name}, sidecar says ${want.name}`);
    }
    if (TYPE_NAMES[field.dtype] !== want.type) {
      problems.push(`field ${want.name} is ${TYPE_NAMES[field.dtype]}, sidecar says ${want.type}`);
    }
    if (field.nullable !== want.nullable) {
      problems.push(`field ${want.name} nullable=${field.nullable}, sidecar says ${want.nullable}`);
    }
  });

  const gotRows = decoded.batches.map((b) => b.numRows);
  if (gotRows.join(",") !== sidecar.batch_rows.join(",")) {
    problems.push(`batch rows [${gotRows}] differ from sidecar [${sidecar.batch_rows}]`);
  }

  const rows: Cell[][] = [];
  for (const batch of decoded.batches) {
    rows.push(...batchRows(batch));
  }
  if (rows.length !== sidecar.rows.length) {
    problems.push(`decoded ${rows.length} rows, sidecar lists ${sidecar.rows.length}`);
    return problems;
  }
  rows.forEach((row, r) => {
    row.forEach((cell, c) => {
      const want = sidecar.rows[r]![c];
      if (want === undefined || !cellMatches(want, cell)) {
        problems.push(
          `row ${r} col ${fields[c]!.name}: decoded ${formatCell(cell)}, ` +
            `sidecar has ${want === undefined ? "nothing" : formatCell(want)}`,
        );
      }
    });
  });
  return problems;
}

export function checkGoldenDir(dir: string): GoldenReport {
  const streams = fs
    .readdirSync(dir)
    .filter((name) => name.endsWith(".fltl"))
    .sort();
  if (streams.length === 0) {
    throw new Error(`no .fltl streams in ${dir}`);
  }
  const failures: string[] = [];
  for (const name of streams) {
    const base = name.slice(0, -".fltl".length);
    const sidecarPath = path.join(dir, base + ".json");
    if (!fs.existsSync(sidecarPath)) {
      failures.push(`${base}: sidecar ${base}.json is missing`);
      continue;
    }
    for (const problem of checkGoldenCase(path.join(dir, name), sidecarPath)) {
      failures.push(`${base}: ${problem}`);
    }
  }
  return { casesChecked: streams.length, failures };
}
