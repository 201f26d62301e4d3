// Binary little-endian splat PLY reader. The vertex element carries a fixed
// positional property list (positions, normals, 16 SH coefficients per
// channel, opacity logit, log scales, quaternion) with an optional trailing
// int32 segment_label. Normals are read and discarded.

export class PlyError extends Error {}

export const SH_COEFFS = 16;

const REQUIRED_PROPERTIES: string[] = (() => {
  const names = ["x", "y", "z", "nx", "ny", "nz"];
  for (let i = 0; i < 3; i++) names.push(`f_dc_${i}`);
  for (let i = 0; i < 45; i++) names.push(`f_rest_${i}`);
  names.push("opacity");
  for (let i = 0; i < 3; i++) names.push(`scale_${i}`);
  for (let i = 0; i < 4; i++) names.push(`rot_${i}`);
  return names;
})();

export interface SplatData {
  count: number;
  means: Float32Array; // (n,3) flat
  rotations: Float32Array; // (n,4) flat, wxyz as stored
  logScales: Float32Array; // (n,3) flat
  opacityLogits: Float32Array; // (n)
  sh: Float32Array; // (n,3,16) flat: [splat][channel][coefficient]
  labels: Int32Array; // (n), zeros when the file has no labels
}

function headerLines(data: Uint8Array): [string[], number] {
  const probe = new TextDecoder("ascii", { fatal: false }).decode(
    data.slice(0, Math.min(data.length, 1 << 16)),
  );
  const end = probe.indexOf("end_header\n");
  if (end < 0) {
    throw new PlyError("header has no 'end_header'");
  }
  const bodyOffset = end + "end_header\n".length;
  return [probe.slice(0, end).split("\n"), bodyOffset];
}

export function parsePly(data: Uint8Array): SplatData {
  if (
    data.length < 3 ||
    data[0] !== 0x70 ||
    data[1] !== 0x6c ||
    data[2] !== 0x79
  ) {
    throw new PlyError("missing 'ply' magic");
  }
  const [lines, bodyOffset] = headerLines(data);

  let fmtSeen = false;
  let count: number | null = null;
  let inVertex = false;
  const props: [string, string][] = [];
  for (const raw of lines.slice(1)) {
    const line = raw.trim();
    if (!line || line.startsWith("comment")) continue;
    const parts = line.split(/\s+/);
    if (parts[0] === "format") {
      if (parts[1] !== "binary_little_endian" || parts[2] !== "1.0") {
        throw new PlyError(`unsupported format '${line}'`);
      }
      fmtSeen = true;
    } else if (parts[0] === "element") {
      if (parts.length !== 3) throw new PlyError(`malformed element '${line}'`);
      if (parts[1] !== "vertex") {
        throw new PlyError(`unsupported element '${parts[1]}'`);
      }
      count = Number(parts[2]);
      if (!Number.isInteger(count) || count < 0) {
        throw new PlyError(`bad vertex count '${parts[2]}'`);
      }
      inVertex = true;
    } else if (parts[0] === "property") {
      if (!inVertex) throw new PlyError("property before any element");
      if (parts.length !== 3) {
        throw new PlyError(`malformed property '${line}'`);
      }
      props.push([parts[1], parts[2]]);
    } else {
      throw new PlyError(`unrecognized header line '${line}'`);
    }
  }
  if (!fmtSeen) throw new PlyError("header missing format line");
  if (count === null) throw new PlyError("header missing vertex element");

  for (let i = 0; i < REQUIRED_PROPERTIES.length; i++) {
    const want = REQUIRED_PROPERTIES[i];
    if (i >= props.length) {
      throw new PlyError(`missing required property '${want}'`);
    }
    if (props[i][1] !== want) {
      throw new PlyError(`property ${i} is '${props[i][1]}', expected '${want}'`);
    }
    if (props[i][0] !== "float" && props[i][0] !== "float32") {
      throw new PlyError(`property '${want}' must be float32`);
    }
  }
  const extra = props.slice(REQUIRED_PROPERTIES.length);
  let hasLabel = false;
  if (extra.length > 0) {
    if (extra.length > 1 || extra[0][1] !== "segment_label") {
      throw new PlyError(
        `unexpected trailing properties ${extra.map((p) => p[1]).join(",")}`,
      );
    }
    if (extra[0][0] !== "int" && extra[0][0] !== "int32") {
      throw new PlyError("'segment_label' must be int32");
    }
    hasLabel = true;
  }

  const stride = 4 * (REQUIRED_PROPERTIES.length + (hasLabel ? 1 : 0));
  const need = count * stride;
  if (data.length - bodyOffset < need) {
    throw new PlyError(
      `body truncated: need ${need} bytes, have ${data.length - bodyOffset}`,
    );
  }
  const view = new DataView(data.buffer, data.byteOffset + bodyOffset, need);

  const means = new Float32Array(count * 3);
  const rotations = new Float32Array(count * 4);
  const logScales = new Float32Array(count * 3);
  const opacityLogits = new Float32Array(count);
  const sh = new Float32Array(count * 3 * SH_COEFFS);
  const labels = new Int32Array(count);

  const OFF_DC = 6 * 4;
  const OFF_REST = 9 * 4;
  const OFF_OPACITY = 54 * 4;
  const OFF_SCALE = 55 * 4;
  const OFF_ROT = 58 * 4;
  const OFF_LABEL = 62 * 4;

  for (let n = 0; n < count; n++) {
    const base = n * stride;
    for (let i = 0; i < 3; i++) {
      means[n * 3 + i] = view.getFloat32(base + i * 4, true);
      logScales[n * 3 + i] = view.getFloat32(base + OFF_SCALE + i * 4, true);
    }
    for (let i = 0; i < 4; i++) {
      rotations[n * 4 + i] = view.getFloat32(base + OFF_ROT + i * 4, true);
    }
    opacityLogits[n] = view.getFloat32(base + OFF_OPACITY, true);
    for (let c = 0; c < 3; c++) {
      sh[(n * 3 + c) * SH_COEFFS] = view.getFloat32(base + OFF_DC + c * 4, true);
      for (let j = 0; j < 15; j++) {
        sh[(n * 3 + c) * SH_COEFFS + 1 + j] = view.getFloat32(
          base + OFF_REST + (c * 15 + j) * 4,
          true,
        );
      }
    }
    if (hasLabel) {
      labels[n] = view.getInt32(base + OFF_LABEL, true);
    }
  }
  return { count, means, rotations, logScales, opacityLogits, sh, labels };
}
