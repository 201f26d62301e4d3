// Shared fixture loading for the node-side test suite.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export function fixturePath(name: string): string {
  return join(FIXTURES, name);
}

export function b64ToBytes(s: string): Uint8Array {
  const buf = Buffer.from(s, "base64");
  return new Uint8Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
}

export function b64ToF64(s: string): Float64Array {
  const b = b64ToBytes(s);
  return new Float64Array(b.buffer, 0, b.byteLength / 8);
}

export function b64ToF32(s: string): Float32Array {
  const b = b64ToBytes(s);
  return new Float32Array(b.buffer, 0, b.byteLength / 4);
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}

export interface Ppm {
  width: number;
  height: number;
  pixels: Uint8Array; // rgb rows
}

export function parsePpm(data: Uint8Array): Ppm {
  const probe = new TextDecoder("ascii").decode(data.slice(0, 64));
  const m = probe.match(/^P6\n(\d+) (\d+)\n255\n/);
  if (!m) throw new Error("not a raw P6 ppm");
  const width = Number(m[1]);
  const height = Number(m[2]);
  const body = m[0].length;
  if (data.length < body + width * height * 3) {
    throw new Error("ppm body truncated");
  }
  return { width, height, pixels: data.slice(body, body + width * height * 3) };
}

export interface CameraFixture {
  position: number[];
  look_at: number[];
  up: number[];
  fov_y: number;
  width: number;
  height: number;
  near: number;
  far: number;
}
