/**
 * Human-readable dump of a stored dataset. The flight's batches are
 * distributed round-robin across endpoints (endpoint i holds batches
 * i, i+E, i+2E, ...), so interleaving the per-endpoint streams restores
 * the original row order.
 */

import { Batch, batchRows, Cell } from "./batch.js";
import { doGet, getFlightInfo } from "./client.js";
import { encodePathDescriptor } from "./flightinfo.js";
import { parseLocation } from "./verify.js";

function formatCell(cell: Cell): string {
  if (cell === null) return "null";
  if (typeof cell === "number" && Object.is(cell, -0)) return "-0";
  return String(cell);
}

export interface TableDump {
  header: string;
  rows: string[];
}

export async function fetchTable(host: string, port: number, name: string): Promise<TableDump> {
  const info = await getFlightInfo(host, port, encodePathDescriptor([name]));
  const perEndpoint: Batch[][] = [];
  for (const endpoint of info.endpoints) {
    const loc = parseLocation(endpoint.locations[0]!);
    const result = await doGet(loc.host, loc.port, endpoint.ticket);
    perEndpoint.push(result.batches);
  }

  const ordered: Batch[] = [];
  const longest = Math.max(0, ...perEndpoint.map((b) => b.length));
  for (let turn = 0; turn < longest; turn++) {
    for (const batches of perEndpoint) {
      if (turn < batches.length) ordered.push(batches[turn]!);
    }
  }

  const header = info.schema.fields.map((f) => f.name).join("\t");
  const rows: string[] = [];
  for (const batch of ordered) {
    for (const row of batchRows(batch)) {
      rows.push(row.map(formatCell).join("\t"));
    }
  }
  return { header, rows };
}
