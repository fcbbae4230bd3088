/**
 * FLIGHT_INFO payload: embedded schema, signed totals (-1 when the server
 * cannot know them up front), then the endpoint list. Each endpoint is an
 * opaque ticket plus one or more location URIs.
 */

import { decodeSchema, Schema } from "./schema.js";
import { Cursor } from "./wire.js";

export interface Endpoint {
  ticket: Buffer;
  locations: string[];
}

export interface FlightInfo {
  schema: Schema;
  totalRecords: bigint;
  totalBytes: bigint;
  endpoints: Endpoint[];
}

export function decodeFlightInfo(payload: Buffer): FlightInfo {
  const cur = new Cursor(payload);
  const schemaLen = cur.u32();
  const schema = decodeSchema(cur.bytes(schemaLen));
  const totalRecords = cur.i64();
  const totalBytes = cur.i64();
  const endpointCount = cur.u16();
  const endpoints: Endpoint[] = [];
  for (let i = 0; i < endpointCount; i++) {
    const ticket = cur.bytes(cur.u32());
    const locCount = cur.u16();
    const locations: string[] = [];
    for (let j = 0; j < locCount; j++) {
      locations.push(cur.utf8(cur.u16()));
    }
    endpoints.push({ ticket: Buffer.from(ticket), locations });
  }
  cur.finish();
  return { schema, totalRecords, totalBytes, endpoints };
}

export function encodePathDescriptor(segments: string[]): Buffer {
  const parts: Buffer[] = [Buffer.from([0x00])];
  const count = Buffer.alloc(2);
  count.writeUInt16LE(segments.length);
  parts.push(count);
  for (const seg of segments) {
    const text = Buffer.from(seg, "utf8");
    const len = Buffer.alloc(2);
    len.writeUInt16LE(text.length);
    parts.push(len, text);
  }
  return Buffer.concat(parts);
}

export function encodeTicket(ticket: Buffer): Buffer {
  const len = Buffer.alloc(4);
  len.writeUInt32LE(ticket.length);
  return Buffer.concat([len, ticket]);
}
