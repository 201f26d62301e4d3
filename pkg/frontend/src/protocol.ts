// Wire protocol for the viewer <-> engine socket. Every message is framed as
// [u8 type][u32 LE payload length][payload]; layouts below match the engine
// byte for byte, so encode(decode(b)) must reproduce b for any canonical b.

export const PROTOCOL_VERSION = 1;
export const HEADER_SIZE = 5;
export const MAX_PAYLOAD = 1 << 28;

export const T_HELLO = 0;
export const T_SCENE_INIT = 1;
export const T_FRAME = 2;
export const T_GRAB = 3;
export const T_DRAG = 4;
export const T_RELEASE = 5;
export const T_SET_PARAM = 6;
export const T_LIGHT = 7;
export const T_ERROR = 8;

export const PARAM_CODES: Readonly<Record<string, number>> = {
  youngs: 0,
  poisson: 1,
  density: 2,
  damping: 3,
};

const PARAM_CODE_SET = new Set(Object.values(PARAM_CODES));

export class ProtocolError extends Error {}

export type Vec3 = readonly [number, number, number];

export interface Hello {
  kind: "hello";
  version: number;
}

export interface SceneObject {
  name: string;
  dynamic: boolean;
}

export interface SceneInit {
  kind: "sceneInit";
  splatBlob: Uint8Array;
  tetmeshBlob: Uint8Array;
  embeddingBlob: Uint8Array;
  objects: SceneObject[];
}

export interface FrameMsg {
  kind: "frame";
  frameId: bigint;
  positions: Float32Array; // flat xyz triples, one per cage vertex
}

export interface Grab {
  kind: "grab";
  objectId: number;
  point: Vec3;
  radius: number;
}

export interface Drag {
  kind: "drag";
  target: Vec3;
}

export interface Release {
  kind: "release";
}

export interface SetParam {
  kind: "setParam";
  objectId: number;
  param: number;
  value: number;
}

export interface LightMsg {
  kind: "light";
  direction: Vec3;
  strength: number;
}

export interface ErrorMsg {
  kind: "error";
  message: string;
}

export type Message =
  | Hello
  | SceneInit
  | FrameMsg
  | Grab
  | Drag
  | Release
  | SetParam
  | LightMsg
  | ErrorMsg;

const utf8Encoder = new TextEncoder();
const utf8Decoder = new TextDecoder("utf-8", { fatal: true });

class PayloadWriter {
  private chunks: Uint8Array[] = [];
  private length = 0;

  u8(v: number): void {
    this.chunks.push(Uint8Array.of(v & 0xff));
    this.length += 1;
  }

  u16(v: number): void {
    const b = new Uint8Array(2);
    new DataView(b.buffer).setUint16(0, v, true);
    this.chunks.push(b);
    this.length += 2;
  }

  u32(v: number): void {
    const b = new Uint8Array(4);
    new DataView(b.buffer).setUint32(0, v >>> 0, true);
    this.chunks.push(b);
    this.length += 4;
  }

  u64(v: bigint): void {
    const b = new Uint8Array(8);
    new DataView(b.buffer).setBigUint64(0, v, true);
    this.chunks.push(b);
    this.length += 8;
  }

  f32(v: number): void {
    const b = new Uint8Array(4);
    new DataView(b.buffer).setFloat32(0, v, true);
    this.chunks.push(b);
    this.length += 4;
  }

  bytes(v: Uint8Array): void {
    this.chunks.push(v);
    this.length += v.length;
  }

  finish(): Uint8Array {
    const out = new Uint8Array(this.length);
    let off = 0;
    for (const c of this.chunks) {
      out.set(c, off);
      off += c.length;
    }
    return out;
  }
}

class PayloadReader {
  private view: DataView;
  private off = 0;

  constructor(private data: Uint8Array) {
    this.view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  }

  get remaining(): number {
    return this.data.length - this.off;
  }

  private need(n: number): void {
    if (this.off + n > this.data.length) {
      throw new ProtocolError("truncated payload");
    }
  }

  u8(): number {
    this.need(1);
    const v = this.view.getUint8(this.off);
    this.off += 1;
    return v;
  }

  u16(): number {
    this.need(2);
    const v = this.view.getUint16(this.off, true);
    this.off += 2;
    return v;
  }

  u32(): number {
    this.need(4);
    const v = this.view.getUint32(this.off, true);
    this.off += 4;
    return v;
  }

  u64(): bigint {
    this.need(8);
    const v = this.view.getBigUint64(this.off, true);
    this.off += 8;
    return v;
  }

  f32(): number {
    this.need(4);
    const v = this.view.getFloat32(this.off, true);
    this.off += 4;
    return v;
  }

  bytes(n: number): Uint8Array {
    this.need(n);
    const v = this.data.slice(this.off, this.off + n);
    this.off += n;
    return v;
  }

  expectEnd(): void {
    if (this.off !== this.data.length) {
      throw new ProtocolError(
        `${this.data.length - this.off} trailing bytes in payload`,
      );
    }
  }
}

function encodePayload(msg: Message): [number, Uint8Array] {
  const w = new PayloadWriter();
  switch (msg.kind) {
    case "hello":
      w.u16(msg.version);
      return [T_HELLO, w.finish()];
    case "sceneInit": {
      for (const blob of [msg.splatBlob, msg.tetmeshBlob, msg.embeddingBlob]) {
        w.u32(blob.length);
        w.bytes(blob);
      }
      w.u16(msg.objects.length);
      for (const obj of msg.objects) {
        const name = utf8Encoder.encode(obj.name);
        w.u32(name.length);
        w.bytes(name);
        w.u8(obj.dynamic ? 1 : 0);
      }
      return [T_SCENE_INIT, w.finish()];
    }
    case "frame": {
      w.u64(msg.frameId);
      const b = new Uint8Array(msg.positions.length * 4);
      const v = new DataView(b.buffer);
      for (let i = 0; i < msg.positions.length; i++) {
        v.setFloat32(i * 4, msg.positions[i], true);
      }
      w.bytes(b);
      return [T_FRAME, w.finish()];
    }
    case "grab":
      w.u32(msg.objectId);
      w.f32(msg.point[0]);
      w.f32(msg.point[1]);
      w.f32(msg.point[2]);
      w.f32(msg.radius);
      return [T_GRAB, w.finish()];
    case "drag":
      w.f32(msg.target[0]);
      w.f32(msg.target[1]);
      w.f32(msg.target[2]);
      return [T_DRAG, w.finish()];
    case "release":
      return [T_RELEASE, w.finish()];
    case "setParam":
      if (!PARAM_CODE_SET.has(msg.param)) {
        throw new ProtocolError(`unknown parameter code ${msg.param}`);
      }
      w.u32(msg.objectId);
      w.u8(msg.param);
      w.f32(msg.value);
      return [T_SET_PARAM, w.finish()];
    case "light":
      w.f32(msg.direction[0]);
      w.f32(msg.direction[1]);
      w.f32(msg.direction[2]);
      w.f32(msg.strength);
      return [T_LIGHT, w.finish()];
    case "error":
      return [T_ERROR, utf8Encoder.encode(msg.message)];
  }
}

export function encode(msg: Message): Uint8Array {
  const [type, payload] = encodePayload(msg);
  if (payload.length > MAX_PAYLOAD) {
    throw new ProtocolError(`payload too large: ${payload.length}`);
  }
  const out = new Uint8Array(HEADER_SIZE + payload.length);
  out[0] = type;
  new DataView(out.buffer).setUint32(1, payload.length, true);
  out.set(payload, HEADER_SIZE);
  return out;
}

function decodePayload(type: number, payload: Uint8Array): Message {
  const r = new PayloadReader(payload);
  switch (type) {
    case T_HELLO: {
      const version = r.u16();
      r.expectEnd();
      return { kind: "hello", version };
    }
    case T_SCENE_INIT: {
      const blobs: Uint8Array[] = [];
      for (let i = 0; i < 3; i++) {
        blobs.push(r.bytes(r.u32()));
      }
      const count = r.u16();
      const objects: SceneObject[] = [];
      for (let i = 0; i < count; i++) {
        const nameLen = r.u32();
        if (nameLen > 4096) {
          throw new ProtocolError(`object name too long: ${nameLen}`);
        }
        let name: string;
        try {
          name = utf8Decoder.decode(r.bytes(nameLen));
        } catch (e) {
          throw new ProtocolError(`invalid utf-8 in object name: ${e}`);
        }
        objects.push({ name, dynamic: r.u8() !== 0 });
      }
      r.expectEnd();
      return {
        kind: "sceneInit",
        splatBlob: blobs[0],
        tetmeshBlob: blobs[1],
        embeddingBlob: blobs[2],
        objects,
      };
    }
    case T_FRAME: {
      const frameId = r.u64();
      const rest = r.remaining;
      if (rest % 12 !== 0) {
        throw new ProtocolError(`frame payload size ${rest} not xyz triples`);
      }
      const raw = r.bytes(rest);
      const positions = new Float32Array(rest / 4);
      const v = new DataView(raw.buffer, raw.byteOffset, raw.byteLength);
      for (let i = 0; i < positions.length; i++) {
        positions[i] = v.getFloat32(i * 4, true);
      }
      return { kind: "frame", frameId, positions };
    }
    case T_GRAB: {
      const objectId = r.u32();
      const point: Vec3 = [r.f32(), r.f32(), r.f32()];
      const radius = r.f32();
      r.expectEnd();
      return { kind: "grab", objectId, point, radius };
    }
    case T_DRAG: {
      const target: Vec3 = [r.f32(), r.f32(), r.f32()];
      r.expectEnd();
      return { kind: "drag", target };
    }
    case T_RELEASE:
      r.expectEnd();
      return { kind: "release" };
    case T_SET_PARAM: {
      const objectId = r.u32();
      const param = r.u8();
      const value = r.f32();
      r.expectEnd();
      if (!PARAM_CODE_SET.has(param)) {
        throw new ProtocolError(`unknown parameter code ${param}`);
      }
      return { kind: "setParam", objectId, param, value };
    }
    case T_LIGHT: {
      const direction: Vec3 = [r.f32(), r.f32(), r.f32()];
      const strength = r.f32();
      r.expectEnd();
      return { kind: "light", direction, strength };
    }
    case T_ERROR: {
      try {
        return { kind: "error", message: utf8Decoder.decode(payload) };
      } catch (e) {
        throw new ProtocolError(`invalid utf-8 in error message: ${e}`);
      }
    }
    default:
      throw new ProtocolError(`unknown message type ${type}`);
  }
}

// Returns [message, bytesConsumed]; [null, 0] means the buffer holds only a
// truncated frame and the caller should wait for more bytes.
export function decode(buffer: Uint8Array): [Message | null, number] {
  if (buffer.length < HEADER_SIZE) {
    return [null, 0];
  }
  const type = buffer[0];
  const length = new DataView(
    buffer.buffer,
    buffer.byteOffset,
    buffer.byteLength,
  ).getUint32(1, true);
  if (length > MAX_PAYLOAD) {
    throw new ProtocolError(`declared payload length ${length} too large`);
  }
  if (buffer.length < HEADER_SIZE + length) {
    return [null, 0];
  }
  const payload = buffer.slice(HEADER_SIZE, HEADER_SIZE + length);
  return [decodePayload(type, payload), HEADER_SIZE + length];
}

// Incremental decoder over a byte stream of unknown chunking.
export class StreamDecoder {
  private buffer = new Uint8Array(0);

  feed(chunk: Uint8Array): Message[] {
    const merged = new Uint8Array(this.buffer.length + chunk.length);
    merged.set(this.buffer, 0);
    merged.set(chunk, this.buffer.length);
    this.buffer = merged;

    const messages: Message[] = [];
    for (;;) {
      const [msg, consumed] = decode(this.buffer);
      if (msg === null) {
        break;
      }
      messages.push(msg);
      this.buffer = this.buffer.slice(consumed);
    }
    return messages;
  }

  get pending(): number {
    return this.buffer.length;
  }
}
