/**
 * Frame layer: `u32le payload_len | u8 msg_type | payload`, preceded on a
 * connection by the 5-byte preamble both sides exchange.
 */

import { Cursor, DecodeError, RemoteError, decodeUtf8 } from "./wire.js";

export const PREAMBLE = Buffer.from([0x46, 0x4c, 0x54, 0x4c, 0x01]); // "FLTL" v1

export const MsgType = {
  SCHEMA: 0x01,
  BATCH: 0x02,
  EOS: 0x03,
  ERROR: 0x04,
  GET_FLIGHT_INFO: 0x10,
  FLIGHT_INFO: 0x11,
  DO_GET: 0x12,
  DO_PUT: 0x13,
  PUT_RESULT: 0x14,
  LIST_FLIGHTS: 0x15,
} as const;

export const KNOWN_TYPES = new Set<number>(Object.values(MsgType));

export interface Frame {
  msgType: number;
  payload: Buffer;
}

export function encodeFrame(msgType: number, payload: Buffer = Buffer.alloc(0)): Buffer {
  const head = Buffer.alloc(5);
  head.writeUInt32LE(payload.length, 0);
  head.writeUInt8(msgType, 4);
  return Buffer.concat([head, payload]);
}

/**
 * Splits a byte buffer (e.g. a dumped stream file) into frames. Offsets in
 * errors are absolute positions within `data`.
 */
export function framesFromBuffer(data: Buffer): Frame[] {
  const frames: Frame[] = [];
  let pos = 0;
  while (pos < data.length) {
    if (pos + 5 > data.length) {
      throw new DecodeError("truncated frame header", pos);
    }
    const payloadLen = data.readUInt32LE(pos);
    const msgType = data.readUInt8(pos + 4);
    if (!KNOWN_TYPES.has(msgType)) {
      throw new DecodeError(`unknown message type 0x${msgType.toString(16)}`, pos + 4);
    }
    const start = pos + 5;
    if (start + payloadLen > data.length) {
      throw new DecodeError("truncated frame payload", start);
    }
    frames.push({ msgType, payload: data.subarray(start, start + payloadLen) });
    pos = start + payloadLen;
  }
  return frames;
}

export function parseFrameHeader(head: Buffer): { payloadLen: number; msgType: number } {
  const payloadLen = head.readUInt32LE(0);
  const msgType = head.readUInt8(4);
  if (!KNOWN_TYPES.has(msgType)) {
    throw new DecodeError(`unknown message type 0x${msgType.toString(16)}`, 4);
  }
  return { payloadLen, msgType };
}

/** ERROR payload: `u32le code | UTF-8 message`. */
export function decodeErrorPayload(payload: Buffer): RemoteError {
  const cur = new Cursor(payload);
  const code = cur.u32();
  const message = decodeUtf8(payload.subarray(cur.pos), cur.pos);
  return new RemoteError(code, message);
}
