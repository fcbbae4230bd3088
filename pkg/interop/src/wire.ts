/**
 * Byte-level plumbing shared by the decoders: a bounds-checked cursor and
 * the error types the CLI reports. Every read failure carries the absolute
 * byte offset where decoding stopped.
 */

export class DecodeError extends Error {
  constructor(message: string, readonly offset: number) {
    super(`${message} (at byte ${offset})`);
    this.name = "DecodeError";
  }
}

export const ERROR_CODE_NAMES: Record<number, string> = {
  1: "NotFound",
  2: "Malformed",
  3: "QueryError",
  4: "Internal",
};

/** An ERROR frame received from the server, rehydrated. */
export class RemoteError extends Error {
  constructor(readonly code: number, message: string) {
    super(`${ERROR_CODE_NAMES[code] ?? `code ${code}`}: ${message}`);
    this.name = "RemoteError";
  }

  get codeName(): string {
    return ERROR_CODE_NAMES[this.code] ?? `code ${this.code}`;
  }
}

const utf8 = new TextDecoder("utf-8", { fatal: true });

export class Cursor {
  pos = 0;

  constructor(readonly buf: Buffer) {}

  private need(n: number): void {
    if (this.pos + n > this.buf.length) {
      throw new DecodeError(
        `need ${n} more bytes, have ${this.buf.length - this.pos}`,
        this.pos,
      );
    }
  }

  u8(): number {
    this.need(1);
    return this.buf.readUInt8(this.pos++);
  }

  u16(): number {
    this.need(2);
    const v = this.buf.readUInt16LE(this.pos);
    this.pos += 2;
    return v;
  }

  u32(): number {
    this.need(4);
    const v = this.buf.readUInt32LE(this.pos);
    this.pos += 4;
    return v;
  }

  u64(): bigint {
    this.need(8);
    const v = this.buf.readBigUInt64LE(this.pos);
    this.pos += 8;
    return v;
  }

  i64(): bigint {
    this.need(8);
    const v = this.buf.readBigInt64LE(this.pos);
    this.pos += 8;
    return v;
  }

  bytes(n: number): Buffer {
    this.need(n);
    const v = this.buf.subarray(this.pos, this.pos + n);
    this.pos += n;
    return v;
  }

  utf8(n: number): string {
    const at = this.pos;
    try {
      return utf8.decode(this.bytes(n));
    } catch (err) {
      if (err instanceof DecodeError) throw err;
      throw new DecodeError("invalid UTF-8", at);
    }
  }

  /** Call once a payload is fully consumed; trailing bytes are a defect. */
  finish(): void {
    if (this.pos !== this.buf.length) {
      throw new DecodeError(
        `${this.buf.length - this.pos} trailing bytes after payload`,
        this.pos,
      );
    }
  }
}

export function decodeUtf8(buf: Buffer, offsetForErrors: number): string {
  try {
    return utf8.decode(buf);
  } catch {
    throw new DecodeError("invalid UTF-8", offsetForErrors);
  }
}
