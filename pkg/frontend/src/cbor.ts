/**
 * Minimal deterministic CBOR codec, wire-compatible with the other
 * backends: definite lengths, shortest integer heads, map keys sorted by
 * their encoded bytes, floats always as 64-bit. Byte strings map to
 * Uint8Array, maps to plain objects with string keys. Indefinite items
 * and tags are rejected.
 */

export type CborValue =
  | number
  | bigint
  | boolean
  | null
  | string
  | Uint8Array
  | CborValue[]
  | { [key: string]: CborValue };

export class CborError extends Error {}

class Writer {
  private chunks: Uint8Array[] = [];
  private scratch = new DataView(new ArrayBuffer(9));

  push(bytes: Uint8Array): void {
    this.chunks.push(bytes);
  }

  head(major: number, arg: number | bigint): void {
    const value = typeof arg === "bigint" ? arg : BigInt(arg);
    if (value < 0n) throw new CborError("negative head argument");
    let out: Uint8Array;
    if (value < 24n) {
      out = Uint8Array.of((major << 5) | Number(value));
    } else if (value < 0x100n) {
      out = Uint8Array.of((major << 5) | 24, Number(value));
    } else if (value < 0x10000n) {
      out = Uint8Array.of((major << 5) | 25, Number(value >> 8n), Number(value & 0xffn));
    } else if (value < 0x100000000n) {
      out = new Uint8Array(5);
      out[0] = (major << 5) | 26;
      new DataView(out.buffer).setUint32(1, Number(value));
    } else if (value <= 0xffffffffffffffffn) {
      out = new Uint8Array(9);
      out[0] = (major << 5) | 27;
      new DataView(out.buffer).setBigUint64(1, value);
    } else {
      throw new CborError(`integer too large: ${value}`);
    }
    this.push(out);
  }

  finish(): Uint8Array {
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const out = new Uint8Array(total);
    let off = 0;
    for (const chunk of this.chunks) {
      out.set(chunk, off);
      off += chunk.length;
    }
    return out;
  }
}

const utf8Encoder = new TextEncoder();
const utf8Decoder = new TextDecoder("utf-8", { fatal: true });

function encodeItem(value: CborValue, w: Writer): void {
  if (value === null) {
    w.push(Uint8Array.of(0xf6));
  } else if (typeof value === "boolean") {
    w.push(Uint8Array.of(value ? 0xf5 : 0xf4));
  } else if (typeof value === "bigint") {
    if (value >= 0n) w.head(0, value);
    else w.head(1, -1n - value);
  } else if (typeof value === "number") {
    if (Number.isSafeInteger(value)) {
      if (value >= 0) w.head(0, value);
      else w.head(1, -1 - value);
    } else {
      const buf = new Uint8Array(9);
      buf[0] = 0xfb;
      new DataView(buf.buffer).setFloat64(1, value);
      w.push(buf);
    }
  } else if (typeof value === "string") {
    const bytes = utf8Encoder.encode(value);
    w.head(3, bytes.length);
    w.push(bytes);
  } else if (value instanceof Uint8Array) {
    w.head(2, value.length);
    w.push(value);
  } else if (Array.isArray(value)) {
    w.head(4, value.length);
    for (const item of value) encodeItem(item, w);
  } else if (typeof value === "object") {
    const entries = Object.entries(value).map(([key, v]) => {
      const kw = new Writer();
      encodeItem(key, kw);
      return { keyBytes: kw.finish(), value: v };
    });
    entries.sort((a, b) => compareBytes(a.keyBytes, b.keyBytes));
    w.head(5, entries.length);
    for (const entry of entries) {
      w.push(entry.keyBytes);
      encodeItem(entry.value, w);
    }
  } else {
    throw new CborError(`unsupported value: ${typeof value}`);
  }
}

function compareBytes(a: Uint8Array, b: Uint8Array): number {
  const n = Math.min(a.length, b.length);
  for (let i = 0; i < n; i++) {
    if (a[i] !== b[i]) return a[i] - b[i];
  }
  return a.length - b.length;
}

export function encode(value: CborValue): Uint8Array {
  const w = new Writer();
  encodeItem(value, w);
  return w.finish();
}

class Reader {
  pos = 0;
  private view: DataView;

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  private byte(): number {
    if (this.pos >= this.data.length) throw new CborError("truncated input");
    return this.data[this.pos++];
  }

  private span(n: number): Uint8Array {
    if (this.pos + n > this.data.length) throw new CborError("truncated input");
    const out = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return out;
  }

  private head(): { major: number; arg: number } {
    const first = this.byte();
    const major = first >> 5;
    const info = first & 0x1f;
    if (info < 24) return { major, arg: info };
    if (info === 24) return { major, arg: this.byte() };
    if (info === 25) {
      const hi = this.byte();
      return { major, arg: (hi << 8) | this.byte() };
    }
    if (info === 26) {
      if (this.pos + 4 > this.data.length) throw new CborError("truncated input");
      const arg = this.view.getUint32(this.pos);
      this.pos += 4;
      return { major, arg };
    }
    if (info === 27) {
      if (this.pos + 8 > this.data.length) throw new CborError("truncated input");
      const big = this.view.getBigUint64(this.pos);
      this.pos += 8;
      if (big > BigInt(Number.MAX_SAFE_INTEGER)) throw new CborError("integer exceeds safe range");
      return { major, arg: Number(big) };
    }
    throw new CborError(`indefinite/reserved info ${info} not supported`);
  }

  item(): CborValue {
    const first = this.data[this.pos];
    if (first === undefined) throw new CborError("truncated input");
    if (first >> 5 === 7) {
      this.pos++;
      const info = first & 0x1f;
      if (info === 20) return false;
      if (info === 21) return true;
      if (info === 22) return null;
      if (info === 26) {
        const v = this.view.getFloat32(this.pos);
        this.pos += 4;
        return v;
      }
      if (info === 27) {
        const v = this.view.getFloat64(this.pos);
        this.pos += 8;
        return v;
      }
      throw new CborError(`unsupported simple value ${info}`);
    }
    const { major, arg } = this.head();
    switch (major) {
      case 0:
        return arg;
      case 1:
        return -1 - arg;
      case 2:
        return new Uint8Array(this.span(arg)); // copy: detach from input
      case 3:
        return utf8Decoder.decode(this.span(arg));
      case 4: {
        const out: CborValue[] = [];
        for (let i = 0; i < arg; i++) out.push(this.item());
        return out;
      }
      case 5: {
        const out: { [key: string]: CborValue } = {};
        for (let i = 0; i < arg; i++) {
          const key = this.item();
          if (typeof key !== "string") throw new CborError("map keys must be text");
          out[key] = this.item();
        }
        return out;
      }
      default:
        throw new CborError(`unsupported major type ${major}`);
    }
  }
}

export function decode(data: Uint8Array): CborValue {
  const reader = new Reader(data);
  const value = reader.item();
  if (reader.pos !== data.length) throw new CborError("trailing bytes after item");
  return value;
}
