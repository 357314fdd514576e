/**
 * Binary packet codecs and framing.
 *
 * Byte-for-byte the same wire format as the simulation server: every
 * multi-byte value little-endian, quaternions scalar-first. A frame is
 * `u32 length | 20-byte header | payload`, and the websocket bridge
 * carries whole frames verbatim as binary messages.
 */

export const MAGIC0 = 0x44; // 'D'
export const MAGIC1 = 0x58; // 'X'
export const VERSION = 1;

export const KIND_TRACKING = 1;
export const KIND_STATE = 2;
export const KIND_CONTROL = 3;
export const KIND_ACK = 4;

export const OP_RESET = 1;
export const OP_SWITCH_TASK = 2;
export const OP_START_EPISODE = 3;
export const OP_END_EPISODE = 4;

export const HEADER_SIZE = 20;
export const KEYPOINT_COUNT = 25;
export const TRACKING_PAYLOAD_SIZE = KEYPOINT_COUNT * 28; // 700
export const MAX_FRAME_SIZE = 1 << 20;

export class DecodeError extends Error {
  constructor(public code: string, message: string) {
    super(`${code}: ${message}`);
  }
}

export interface Header {
  kind: number;
  sessionId: number;
  seq: number;
  timestampUs: bigint;
}

export interface HandFrame {
  /** 25 x (x, y, z) */
  positions: Float64Array;
  /** 25 x (w, x, y, z) */
  quats: Float64Array;
}

export interface WireState {
  n: number;
  m: number;
  q: Float64Array;
  /** m x (x, y, z, qw, qx, qy, qz) */
  objectPoses: Float64Array;
}

export interface Control {
  op: number;
  arg: string;
  seed: bigint;
}

export interface Ack {
  op: number;
  status: number;
  arg: string;
}

export function packHeader(h: Header): Uint8Array {
  const buf = new Uint8Array(HEADER_SIZE);
  const view = new DataView(buf.buffer);
  buf[0] = MAGIC0;
  buf[1] = MAGIC1;
  buf[2] = VERSION;
  buf[3] = h.kind;
  view.setUint32(4, h.sessionId, true);
  view.setUint32(8, h.seq, true);
  view.setBigUint64(12, h.timestampUs, true);
  return buf;
}

export function parseHeader(buf: Uint8Array): Header {
  if (buf.length < HEADER_SIZE) {
    throw new DecodeError("truncated", `header needs ${HEADER_SIZE} bytes`);
  }
  if (buf[0] !== MAGIC0 || buf[1] !== MAGIC1) {
    throw new DecodeError("bad-magic", `magic ${buf[0]},${buf[1]}`);
  }
  if (buf[2] !== VERSION) {
    throw new DecodeError("bad-version", `version ${buf[2]}`);
  }
  const kind = buf[3];
  if (kind < 1 || kind > 4) {
    throw new DecodeError("bad-kind", `kind ${kind}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset);
  return {
    kind,
    sessionId: view.getUint32(4, true),
    seq: view.getUint32(8, true),
    timestampUs: view.getBigUint64(12, true),
  };
}

// ---------------------------------------------------------------------------
// tracking
// ---------------------------------------------------------------------------

export function encodeTracking(frame: HandFrame): Uint8Array {
  const buf = new Uint8Array(TRACKING_PAYLOAD_SIZE);
  const view = new DataView(buf.buffer);
  for (let k = 0; k < KEYPOINT_COUNT; k++) {
    const off = k * 28;
    view.setFloat32(off, frame.positions[k * 3], true);
    view.setFloat32(off + 4, frame.positions[k * 3 + 1], true);
    view.setFloat32(off + 8, frame.positions[k * 3 + 2], true);
    view.setFloat32(off + 12, frame.quats[k * 4], true);
    view.setFloat32(off + 16, frame.quats[k * 4 + 1], true);
    view.setFloat32(off + 20, frame.quats[k * 4 + 2], true);
    view.setFloat32(off + 24, frame.quats[k * 4 + 3], true);
  }
  return buf;
}

export function decodeTracking(payload: Uint8Array): HandFrame {
  if (payload.length !== TRACKING_PAYLOAD_SIZE) {
    throw new DecodeError(
      "truncated",
      `tracking payload is ${payload.length} B, expected ${TRACKING_PAYLOAD_SIZE}`,
    );
  }
  const view = new DataView(payload.buffer, payload.byteOffset);
  const positions = new Float64Array(KEYPOINT_COUNT * 3);
  const quats = new Float64Array(KEYPOINT_COUNT * 4);
  for (let k = 0; k < KEYPOINT_COUNT; k++) {
    const off = k * 28;
    positions[k * 3] = view.getFloat32(off, true);
    positions[k * 3 + 1] = view.getFloat32(off + 4, true);
    positions[k * 3 + 2] = view.getFloat32(off + 8, true);
    quats[k * 4] = view.getFloat32(off + 12, true);
    quats[k * 4 + 1] = view.getFloat32(off + 16, true);
    quats[k * 4 + 2] = view.getFloat32(off + 20, true);
    quats[k * 4 + 3] = view.getFloat32(off + 24, true);
  }
  return { positions, quats };
}

// ---------------------------------------------------------------------------
// state
// ---------------------------------------------------------------------------

export function statePayloadSize(n: number, m: number): number {
  return 4 + 4 * n + 28 * m;
}

export function encodeState(state: WireState): Uint8Array {
  const buf = new Uint8Array(statePayloadSize(state.n, state.m));
  const view = new DataView(buf.buffer);
  view.setUint16(0, state.n, true);
  view.setUint16(2, state.m, true);
  for (let i = 0; i < state.n; i++) {
    view.setFloat32(4 + 4 * i, state.q[i], true);
  }
  const base = 4 + 4 * state.n;
  for (let i = 0; i < state.m * 7; i++) {
    view.setFloat32(base + 4 * i, state.objectPoses[i], true);
  }
  return buf;
}

export function decodeState(payload: Uint8Array): WireState {
  if (payload.length < 4) {
    throw new DecodeError("truncated", "state payload shorter than its counts");
  }
  const view = new DataView(payload.buffer, payload.byteOffset);
  const n = view.getUint16(0, true);
  const m = view.getUint16(2, true);
  if (payload.length !== statePayloadSize(n, m)) {
    throw new DecodeError(
      "truncated",
      `state payload is ${payload.length} B, expected ${statePayloadSize(n, m)}`,
    );
  }
  const q = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    q[i] = view.getFloat32(4 + 4 * i, true);
  }
  const objectPoses = new Float64Array(m * 7);
  const base = 4 + 4 * n;
  for (let i = 0; i < m * 7; i++) {
    objectPoses[i] = view.getFloat32(base + 4 * i, true);
  }
  return { n, m, q, objectPoses };
}

// ---------------------------------------------------------------------------
// control / ack
// ---------------------------------------------------------------------------

const utf8 = { enc: new TextEncoder(), dec: new TextDecoder() };

export function encodeControl(control: Control): Uint8Array {
  const arg = utf8.enc.encode(control.arg);
  if (arg.length > 255) throw new Error("control arg exceeds 255 bytes");
  const buf = new Uint8Array(2 + arg.length + 8);
  buf[0] = control.op;
  buf[1] = arg.length;
  buf.set(arg, 2);
  new DataView(buf.buffer).setBigUint64(2 + arg.length, control.seed, true);
  return buf;
}

export function decodeControl(payload: Uint8Array): Control {
  if (payload.length < 10) {
    throw new DecodeError("truncated", "control payload shorter than 10 B");
  }
  const op = payload[0];
  const argLen = payload[1];
  if (payload.length !== 2 + argLen + 8) {
    throw new DecodeError("truncated", "control payload length mismatch");
  }
  const arg = utf8.dec.decode(payload.subarray(2, 2 + argLen));
  const seed = new DataView(payload.buffer, payload.byteOffset).getBigUint64(
    2 + argLen, true);
  return { op, arg, seed };
}

export function encodeAck(ack: Ack): Uint8Array {
  const arg = utf8.enc.encode(ack.arg);
  const buf = new Uint8Array(3 + arg.length);
  buf[0] = ack.op;
  buf[1] = ack.status;
  buf[2] = arg.length;
  buf.set(arg, 3);
  return buf;
}

export function decodeAck(payload: Uint8Array): Ack {
  if (payload.length < 3) {
    throw new DecodeError("truncated", "ack payload shorter than 3 B");
  }
  if (payload.length !== 3 + payload[2]) {
    throw new DecodeError("truncated", "ack payload length mismatch");
  }
  return {
    op: payload[0],
    status: payload[1],
    arg: utf8.dec.decode(payload.subarray(3)),
  };
}

// ---------------------------------------------------------------------------
// framing
// ---------------------------------------------------------------------------

export function framePacket(header: Header, payload: Uint8Array): Uint8Array {
  const body = new Uint8Array(4 + HEADER_SIZE + payload.length);
  new DataView(body.buffer).setUint32(0, HEADER_SIZE + payload.length, true);
  body.set(packHeader(header), 4);
  body.set(payload, 4 + HEADER_SIZE);
  return body;
}

export function decodePacket(
  body: Uint8Array,
  expectKind?: number,
): { header: Header; payload: Uint8Array } {
  const header = parseHeader(body);
  if (expectKind !== undefined && header.kind !== expectKind) {
    throw new DecodeError(
      "kind-mismatch",
      `expected kind ${expectKind}, got ${header.kind}`,
    );
  }
  return { header, payload: body.subarray(HEADER_SIZE) };
}

/** Incremental length-prefixed splitter (frames may span ws messages). */
export class FrameSplitter {
  private buf = new Uint8Array(0);

  feed(data: Uint8Array): Uint8Array[] {
    const joined = new Uint8Array(this.buf.length + data.length);
    joined.set(this.buf, 0);
    joined.set(data, this.buf.length);
    this.buf = joined;

    const frames: Uint8Array[] = [];
    for (;;) {
      if (this.buf.length < 4) return frames;
      const length = new DataView(this.buf.buffer, this.buf.byteOffset)
        .getUint32(0, true);
      if (length < HEADER_SIZE || length > MAX_FRAME_SIZE) {
        throw new DecodeError("desync", `frame length ${length}`);
      }
      if (this.buf.length < 4 + length) return frames;
      frames.push(this.buf.slice(4, 4 + length));
      this.buf = this.buf.slice(4 + length);
    }
  }
}
