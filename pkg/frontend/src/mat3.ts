// Minimal 3x3 / vec3 helpers over flat Float64Arrays (row-major 3x3).

export type Mat3 = Float64Array; // length 9, m[r * 3 + c]
export type V3 = readonly [number, number, number];

export function mat3Mul(a: Mat3, b: Mat3, out?: Mat3): Mat3 {
  const o = out ?? new Float64Array(9);
  const r = new Float64Array(9);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      r[i * 3 + j] =
        a[i * 3] * b[j] + a[i * 3 + 1] * b[3 + j] + a[i * 3 + 2] * b[6 + j];
    }
  }
  o.set(r);
  return o;
}

export function mat3Det(m: Mat3): number {
  return (
    m[0] * (m[4] * m[8] - m[5] * m[7]) -
    m[1] * (m[3] * m[8] - m[5] * m[6]) +
    m[2] * (m[3] * m[7] - m[4] * m[6])
  );
}

export function mat3Inv(m: Mat3, out?: Mat3): Mat3 {
  const det = mat3Det(m);
  if (det === 0 || !Number.isFinite(det)) {
    throw new Error("singular 3x3 matrix");
  }
  const o = out ?? new Float64Array(9);
  const inv = 1.0 / det;
  const r = new Float64Array(9);
  r[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  r[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  r[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  r[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  r[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  r[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  r[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  r[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  r[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  o.set(r);
  return o;
}

export function cross(a: V3, b: V3): [number, number, number] {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm3(v: V3): number {
  return Math.hypot(v[0], v[1], v[2]);
}

export function normalize3(v: V3): [number, number, number] {
  const n = norm3(v);
  if (n < 1e-12) {
    throw new Error("cannot normalize near-zero vector");
  }
  return [v[0] / n, v[1] / n, v[2] / n];
}
