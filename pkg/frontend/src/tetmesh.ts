// Text tetmesh reader ("tetmesh v1"): a vertex table in full float64
// precision followed by a tet index table.

export class TetmeshError extends Error {}

export interface TetMeshData {
  vertexCount: number;
  tetCount: number;
  vertices: Float64Array; // (V,3) flat
  tets: Uint32Array; // (T,4) flat
}

export function parseTetmesh(text: string): TetMeshData {
  const lines = text.split("\n");
  let i = 0;
  const next = (): string => {
    while (i < lines.length) {
      const line = lines[i++].trim();
      if (line) return line;
    }
    throw new TetmeshError("unexpected end of tetmesh text");
  };

  if (next() !== "tetmesh v1") {
    throw new TetmeshError("missing 'tetmesh v1' magic");
  }
  const vh = next().split(/\s+/);
  if (vh.length !== 2 || vh[0] !== "verts") {
    throw new TetmeshError("expected 'verts N'");
  }
  const nv = Number(vh[1]);
  if (!Number.isInteger(nv) || nv < 0) {
    throw new TetmeshError(`bad vertex count '${vh[1]}'`);
  }
  const vertices = new Float64Array(nv * 3);
  for (let v = 0; v < nv; v++) {
    const parts = next().split(/\s+/);
    if (parts.length !== 3) {
      throw new TetmeshError(`vertex ${v}: expected 3 coordinates`);
    }
    for (let c = 0; c < 3; c++) {
      const x = Number(parts[c]);
      if (!Number.isFinite(x)) {
        throw new TetmeshError(`vertex ${v}: bad coordinate '${parts[c]}'`);
      }
      vertices[v * 3 + c] = x;
    }
  }
  const th = next().split(/\s+/);
  if (th.length !== 2 || th[0] !== "tets") {
    throw new TetmeshError("expected 'tets M'");
  }
  const nt = Number(th[1]);
  if (!Number.isInteger(nt) || nt < 0) {
    throw new TetmeshError(`bad tet count '${th[1]}'`);
  }
  const tets = new Uint32Array(nt * 4);
  for (let t = 0; t < nt; t++) {
    const parts = next().split(/\s+/);
    if (parts.length !== 4) {
      throw new TetmeshError(`tet ${t}: expected 4 vertex ids`);
    }
    for (let c = 0; c < 4; c++) {
      const id = Number(parts[c]);
      if (!Number.isInteger(id) || id < 0 || id >= nv) {
        throw new TetmeshError(`tet ${t}: vertex id '${parts[c]}' out of range`);
      }
      tets[t * 4 + c] = id;
    }
  }
  return { vertexCount: nv, tetCount: nt, vertices, tets };
}
