/**
 * Minimal TCP client: one connection per command. Connect, exchange the
 * 5-byte preamble, send a single request frame, then read reply frames
 * until the command's terminator. An ERROR frame anywhere becomes a thrown
 * RemoteError carrying the server's code and message.
 */

import * as net from "node:net";

import { Batch, decodeBatch } from "./batch.js";
import {
  decodeErrorPayload,
  encodeFrame,
  Frame,
  KNOWN_TYPES,
  MsgType,
  PREAMBLE,
} from "./frames.js";
import { decodeFlightInfo, encodeTicket, FlightInfo } from "./flightinfo.js";
import { decodeSchema, Schema } from "./schema.js";
import { DecodeError } from "./wire.js";

const MAX_FRAME_PAYLOAD = 64 * 1024 * 1024;

/** Pull-style reader over a socket's data events. One pending read at a time. */
class StreamReader {
  private chunks: Buffer[] = [];
  private buffered = 0;
  private ended = false;
  private failure: Error | null = null;
  private wake: (() => void) | null = null;

  constructor(socket: net.Socket) {
    socket.on("data", (chunk) => {
      this.chunks.push(chunk);
      this.buffered += chunk.length;
      this.wake?.();
    });
    socket.on("end", () => {
      this.ended = true;
      this.wake?.();
    });
    socket.on("error", (err) => {
      this.failure = err;
      this.wake?.();
    });
    socket.on("close", () => {
      this.ended = true;
      this.wake?.();
    });
  }

  /** Read exactly n bytes, or throw if the stream ends first. */
  async take(n: number): Promise<Buffer> {
    while (this.buffered < n) {
      if (this.failure) throw this.failure;
      if (this.ended) {
        throw new DecodeError(
          `connection closed ${this.buffered} bytes into a ${n}-byte read`,
          0,
        );
      }
      await new Promise<void>((resolve) => {
        this.wake = resolve;
      });
      this.wake = null;
    }
    let out: Buffer;
    if (this.chunks.length > 0 && this.chunks[0]!.length >= n) {
      out = this.chunks[0]!.subarray(0, n);
      this.chunks[0] = this.chunks[0]!.subarray(n);
      if (this.chunks[0]!.length === 0) this.chunks.shift();
    } else {
      out = Buffer.alloc(n);
      let filled = 0;
      while (filled < n) {
        const head = this.chunks[0]!;
        const want = Math.min(head.length, n - filled);
        head.copy(out, filled, 0, want);
        filled += want;
        if (want === head.length) this.chunks.shift();
        else this.chunks[0] = head.subarray(want);
      }
    }
    this.buffered -= n;
    return out;
  }
}

export class Connection {
  private constructor(
    private socket: net.Socket,
    private reader: StreamReader,
  ) {}

  static async open(host: string, port: number): Promise<Connection> {
    const socket = await new Promise<net.Socket>((resolve, reject) => {
      const s = net.connect({ host, port, noDelay: true });
      s.once("connect", () => {
        s.removeListener("error", reject);
        resolve(s);
      });
      s.once("error", reject);
    });
    const reader = new StreamReader(socket);
    socket.write(PREAMBLE);
    const echoed = await reader.take(PREAMBLE.length);
    if (!echoed.equals(PREAMBLE)) {
      socket.destroy();
      throw new DecodeError(
        `server preamble ${echoed.toString("hex")} does not match ${PREAMBLE.toString("hex")}`,
        0,
      );
    }
    return new Connection(socket, reader);
  }

  send(msgType: number, payload: Buffer): void {
    this.socket.write(encodeFrame(msgType, payload));
  }

  async readFrame(): Promise<Frame> {
    const head = await this.reader.take(5);
    const length = head.readUInt32LE(0);
    const msgType = head[4]!;
    if (!KNOWN_TYPES.has(msgType)) {
      throw new DecodeError(`unknown message type 0x${msgType.toString(16)}`, 4);
    }
    if (length > MAX_FRAME_PAYLOAD) {
      throw new DecodeError(`frame payload of ${length} bytes is implausible`, 0);
    }
    const payload = length > 0 ? await this.reader.take(length) : Buffer.alloc(0);
    return { msgType, payload };
  }

  close(): void {
    this.socket.destroy();
  }
}

function rejectFrame(frame: Frame, wanted: string): never {
  if (frame.msgType === MsgType.ERROR) {
    throw decodeErrorPayload(frame.payload);
  }
  throw new DecodeError(
    `expected ${wanted}, server sent message type 0x${frame.msgType.toString(16)}`,
    4,
  );
}

export async function getFlightInfo(
  host: string,
  port: number,
  descriptor: Buffer,
): Promise<FlightInfo> {
  const conn = await Connection.open(host, port);
  try {
    conn.send(MsgType.GET_FLIGHT_INFO, descriptor);
    const frame = await conn.readFrame();
    if (frame.msgType !== MsgType.FLIGHT_INFO) rejectFrame(frame, "FLIGHT_INFO");
    return decodeFlightInfo(frame.payload);
  } finally {
    conn.close();
  }
}

export interface StreamResult {
  schema: Schema;
  batches: Batch[];
  /** Total BATCH payload bytes received, framing excluded. */
  payloadBytes: number;
}

export async function doGet(host: string, port: number, ticket: Buffer): Promise<StreamResult> {
  const conn = await Connection.open(host, port);
  try {
    conn.send(MsgType.DO_GET, encodeTicket(ticket));
    const first = await conn.readFrame();
    if (first.msgType !== MsgType.SCHEMA) rejectFrame(first, "SCHEMA");
    const schema = decodeSchema(first.payload);
    const batches: Batch[] = [];
    let payloadBytes = 0;
    for (;;) {
      const frame = await conn.readFrame();
      if (frame.msgType === MsgType.EOS) {
        if (frame.payload.length !== 0) {
          throw new DecodeError("end-of-stream payload must be empty", 5);
        }
        break;
      }
      if (frame.msgType !== MsgType.BATCH) rejectFrame(frame, "BATCH or EOS");
      batches.push(decodeBatch(frame.payload, schema));
      payloadBytes += frame.payload.length;
    }
    return { schema, batches, payloadBytes };
  } finally {
    conn.close();
  }
}
