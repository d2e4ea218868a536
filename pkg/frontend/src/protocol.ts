/**
 * Frame protocol shared with the Python client.
 *
 * frame = u32 little-endian header length || UTF-8 JSON header || raw payload
 *
 * Request headers carry: op (handshake | predict_eps | encode | decode |
 * shutdown), shape [c, h, w], dtype "f32" | "f64", timestep, cond, and
 * payload_bytes. Payloads are row-major (channel, row, column) little-endian
 * floats. Responses reuse the same frame layout with a status field; the
 * handshake response carries n_train and the full alpha_bar table.
 */

export type Op = "handshake" | "predict_eps" | "encode" | "decode" | "shutdown";
export type Dtype = "f32" | "f64";

export interface FrameHeader {
  op?: string;
  status?: "ok" | "protocol_error" | "remote_error";
  message?: string;
  shape?: number[];
  dtype?: string;
  timestep?: number;
  cond?: string;
  payload_bytes?: number;
  n_train?: number;
  alpha_bar?: number[];
}

export interface Frame {
  header: FrameHeader;
  payload: Buffer;
}

export function encodeFrame(header: FrameHeader, payload: Buffer = Buffer.alloc(0)): Buffer {
  const withSize = { ...header, payload_bytes: payload.length };
  const head = Buffer.from(JSON.stringify(withSize), "utf-8");
  const len = Buffer.alloc(4);
  len.writeUInt32LE(head.length, 0);
  return Buffer.concat([len, head, payload]);
}

/** Incremental frame decoder for a byte stream. */
export class FrameDecoder {
  private buffer: Buffer = Buffer.alloc(0);

  push(chunk: Buffer): void {
    this.buffer = this.buffer.length === 0 ? chunk : Buffer.concat([this.buffer, chunk]);
  }

  /**
   * Returns the next complete frame, or null if more bytes are needed.
   * Throws on an unparseable header; the caller decides whether to answer
   * with a protocol error or drop the connection.
   */
  next(): Frame | null {
    if (this.buffer.length < 4) return null;
    const headLen = this.buffer.readUInt32LE(0);
    if (this.buffer.length < 4 + headLen) return null;
    const headRaw = this.buffer.subarray(4, 4 + headLen).toString("utf-8");
    let header: FrameHeader;
    try {
      header = JSON.parse(headRaw) as FrameHeader;
    } catch (err) {
      // skip the bad header so the stream can resynchronize
      this.buffer = this.buffer.subarray(4 + headLen);
      throw new Error(`unparseable frame header: ${String(err)}`);
    }
    if (typeof header !== "object" || header === null || Array.isArray(header)) {
      this.buffer = this.buffer.subarray(4 + headLen);
      throw new Error("frame header is not a JSON object");
    }
    const payloadBytes = header.payload_bytes ?? 0;
    if (this.buffer.length < 4 + headLen + payloadBytes) return null;
    const payload = Buffer.from(this.buffer.subarray(4 + headLen, 4 + headLen + payloadBytes));
    this.buffer = this.buffer.subarray(4 + headLen + payloadBytes);
    return { header, payload };
  }
}

export function unpackPayload(payload: Buffer, shape: number[], dtype: Dtype): Float64Array {
  const [c, h, w] = shape;
  const count = c * h * w;
  const itemSize = dtype === "f32" ? 4 : 8;
  if (payload.length !== count * itemSize) {
    throw new Error(`payload has ${payload.length} bytes, shape needs ${count * itemSize}`);
  }
  const out = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    out[i] = dtype === "f32" ? payload.readFloatLE(i * 4) : payload.readDoubleLE(i * 8);
  }
  return out;
}

export function packPayload(values: Float64Array, dtype: Dtype): Buffer {
  const itemSize = dtype === "f32" ? 4 : 8;
  const out = Buffer.alloc(values.length * itemSize);
  for (let i = 0; i < values.length; i++) {
    if (dtype === "f32") out.writeFloatLE(Math.fround(values[i]), i * 4);
    else out.writeDoubleLE(values[i], i * 8);
  }
  return out;
}

export function isFinitePayload(values: Float64Array): boolean {
  for (const v of values) {
    if (!Number.isFinite(v)) return false;
  }
  return true;
}
