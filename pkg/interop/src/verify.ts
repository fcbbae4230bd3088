/**
 * Synthetic-stream verification. The server's generated dataset has four
 * non-nullable Int64 fields f0..f3 where cell (row, j) holds 4*row + j,
 * so every byte of a fetched stream can be checked against the formula
 * without keeping a reference copy around.
 */

import { batchByteSize } from "./batch.js";
import { doGet, getFlightInfo } from "./client.js";
import { DataType, Schema } from "./schema.js";
import { encodePathDescriptor } from "./flightinfo.js";
import { DecodeError } from "./wire.js";

export interface VerifyReport {
  recordsChecked: number;
  mismatches: number;
  bytes: number;
}

export function parseLocation(uri: string): { host: string; port: number } {
  const url = new URL(uri);
  if (url.protocol !== "fltl:" || !url.hostname || !url.port) {
    throw new DecodeError(`bad location ${JSON.stringify(uri)}`, 0);
  }
  if ((url.pathname && url.pathname !== "/") || url.search || url.hash) {
    throw new DecodeError(`location ${JSON.stringify(uri)} has trailing components`, 0);
  }
  // URL strips the brackets from IPv6 hosts; Node's net.connect wants them gone.
  return { host: url.hostname.replace(/^\[|\]$/g, ""), port: Number(url.port) };
}

function checkPerfSchema(schema: Schema): void {
  const names = schema.fields.map((f) => f.name).join(",");
  if (names !== "f0,f1,f2,f3") {
    throw new Error(`expected fields f0..f3, server sent [${names}]`);
  }
  for (const field of schema.fields) {
    if (field.dtype !== DataType.Int64 || field.nullable) {
      throw new Error(`field ${field.name} must be non-nullable int64`);
    }
  }
}

/**
 * Fetch the generated dataset of `records` rows and check every cell.
 * Endpoints are fetched one at a time, in the order the server listed
 * them; their row ranges are contiguous, so a single running row counter
 * tracks the expected values. Mismatches are counted per cell.
 */
export async function fetchAndVerify(
  host: string,
  port: number,
  records: number,
): Promise<VerifyReport> {
  const descriptor = encodePathDescriptor(["perf", String(records)]);
  const info = await getFlightInfo(host, port, descriptor);
  checkPerfSchema(info.schema);

  let row = 0;
  let mismatches = 0;
  let bytes = 0;
  for (const endpoint of info.endpoints) {
    const loc = parseLocation(endpoint.locations[0]!);
    const result = await doGet(loc.host, loc.port, endpoint.ticket);
    checkPerfSchema(result.schema);
    for (const batch of result.batches) {
      bytes += batchByteSize(batch);
      for (let j = 0; j < 4; j++) {
        const values = batch.columns[j]!.values;
        for (let r = 0; r < batch.numRows; r++) {
          // All generated values sit far below 2^53, so a pair of u32
          // reads compares exactly without allocating BigInts per cell.
          const lo = values.readUInt32LE(8 * r);
          const hi = values.readUInt32LE(8 * r + 4);
          if (hi * 0x100000000 + lo !== 4 * (row + r) + j) {
            mismatches++;
          }
        }
      }
      row += batch.numRows;
    }
  }

  if (row !== records) {
    throw new Error(`server sent ${row} rows, expected ${records}`);
  }
  if (info.totalRecords !== BigInt(records)) {
    throw new Error(
      `flight info claims ${info.totalRecords} total records, expected ${records}`,
    );
  }
  return { recordsChecked: row, mismatches, bytes };
}
