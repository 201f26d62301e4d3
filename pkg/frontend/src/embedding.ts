// EMB1 blob reader plus the cage -> splat transform update. Each splat owns
// a local tet whose four vertices ride the cage via barycentric bindings;
// the splat's deformation gradient comes from that local tet and updates
// its covariance as F sigma0 F^T. Inverted local tets (det F <= 0) hold
// their previous covariance; means always follow the cage.

import { mat3Inv } from "./mat3";
import type { TetMeshData } from "./tetmesh";

export class EmbeddingError extends Error {}

export interface EmbeddingData {
  count: number;
  nCageVertices: number;
  localRest: Float64Array; // (n,4,3) flat
  meanWeights: Float64Array; // (n,4) flat, partition of unity per splat
  tetIndex: Uint32Array; // (n,4) flat, cage tet per local vertex
  weights: Float64Array; // (n,4,4) flat, partition of unity per local vertex
  sigma0: Float64Array; // (n,3,3) flat, symmetric rest covariances
  restInverseBasis: Float64Array; // (n,3,3) flat
}

export interface SplatTransforms {
  means: Float64Array; // (n,3) flat
  covariances: Float64Array; // (n,3,3) flat
  degenerate: Uint8Array; // (n)
}

const MAGIC = [0x45, 0x4d, 0x42, 0x31]; // "EMB1"

export function parseEmbedding(data: Uint8Array): EmbeddingData {
  if (data.length < 12 || MAGIC.some((b, i) => data[i] !== b)) {
    throw new EmbeddingError("not an EMB1 blob");
  }
  const head = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const n = head.getUint32(4, true);
  const ncv = head.getUint32(8, true);
  const counts = [n * 12, n * 4, n * 4, n * 16, n * 6];
  const need = 12 + counts.reduce((a, c) => a + c * 4, 0);
  if (data.length < need) {
    throw new EmbeddingError(
      `EMB1 blob truncated: need ${need} bytes, have ${data.length}`,
    );
  }
  let off = data.byteOffset + 12;
  const readF32 = (cnt: number): Float32Array => {
    const a = new Float32Array(cnt);
    const v = new DataView(data.buffer, off, cnt * 4);
    for (let i = 0; i < cnt; i++) a[i] = v.getFloat32(i * 4, true);
    off += cnt * 4;
    return a;
  };
  const readU32 = (cnt: number): Uint32Array => {
    const a = new Uint32Array(cnt);
    const v = new DataView(data.buffer, off, cnt * 4);
    for (let i = 0; i < cnt; i++) a[i] = v.getUint32(i * 4, true);
    off += cnt * 4;
    return a;
  };

  const localF32 = readF32(counts[0]);
  const meanWF32 = readF32(counts[1]);
  const tetIndex = readU32(counts[2]);
  const weightsF32 = readF32(counts[3]);
  const packedF32 = readF32(counts[4]);

  const localRest = Float64Array.from(localF32);

  // float32 storage perturbs the weight sums; rebuild the first component
  // so partitions of unity survive the round trip exactly
  const meanWeights = Float64Array.from(meanWF32);
  for (let s = 0; s < n; s++) {
    const b = s * 4;
    meanWeights[b] =
      1.0 - (meanWeights[b + 1] + meanWeights[b + 2] + meanWeights[b + 3]);
  }
  const weights = Float64Array.from(weightsF32);
  for (let sv = 0; sv < n * 4; sv++) {
    const b = sv * 4;
    weights[b] = 1.0 - (weights[b + 1] + weights[b + 2] + weights[b + 3]);
  }

  const sigma0 = new Float64Array(n * 9);
  for (let s = 0; s < n; s++) {
    const p = s * 6;
    const m = s * 9;
    sigma0[m] = packedF32[p];
    sigma0[m + 1] = sigma0[m + 3] = packedF32[p + 1];
    sigma0[m + 2] = sigma0[m + 6] = packedF32[p + 2];
    sigma0[m + 4] = packedF32[p + 3];
    sigma0[m + 5] = sigma0[m + 7] = packedF32[p + 4];
    sigma0[m + 8] = packedF32[p + 5];
  }

  // inverse of the column basis [r1-r0 | r2-r0 | r3-r0] per splat
  const restInverseBasis = new Float64Array(n * 9);
  const basis = new Float64Array(9);
  for (let s = 0; s < n; s++) {
    const r = s * 12;
    for (let e = 0; e < 3; e++) {
      const v = r + (e + 1) * 3;
      basis[e] = localRest[v] - localRest[r];
      basis[3 + e] = localRest[v + 1] - localRest[r + 1];
      basis[6 + e] = localRest[v + 2] - localRest[r + 2];
    }
    try {
      restInverseBasis.set(mat3Inv(basis), s * 9);
    } catch {
      throw new EmbeddingError(`splat ${s}: degenerate local rest tet`);
    }
  }

  return {
    count: n,
    nCageVertices: ncv,
    localRest,
    meanWeights,
    tetIndex,
    weights,
    sigma0,
    restInverseBasis,
  };
}

// Push all splats through a deformed cage. `positions` is the flat (V,3)
// cage vertex array from a frame message; `previous` supplies the held
// covariances for splats whose local tet is currently inverted.
export function applyFrame(
  emb: EmbeddingData,
  cage: TetMeshData,
  positions: ArrayLike<number>,
  previous: SplatTransforms | null = null,
): SplatTransforms {
  if (positions.length !== emb.nCageVertices * 3) {
    throw new EmbeddingError(
      `cage has ${emb.nCageVertices} vertices, got ${positions.length / 3}`,
    );
  }
  const n = emb.count;
  const means = new Float64Array(n * 3);
  const covariances = new Float64Array(n * 9);
  const degenerate = new Uint8Array(n);

  const v = new Float64Array(12); // deformed local tet vertices (4,3)
  const f = new Float64Array(9);
  const tmp = new Float64Array(9);

  for (let s = 0; s < n; s++) {
    // local vertices follow their barycentric cage bindings
    for (let lv = 0; lv < 4; lv++) {
      const tet = emb.tetIndex[s * 4 + lv] * 4;
      const wb = (s * 4 + lv) * 4;
      let x = 0;
      let y = 0;
      let z = 0;
      for (let c = 0; c < 4; c++) {
        const w = emb.weights[wb + c];
        const p = cage.tets[tet + c] * 3;
        x += w * positions[p];
        y += w * positions[p + 1];
        z += w * positions[p + 2];
      }
      v[lv * 3] = x;
      v[lv * 3 + 1] = y;
      v[lv * 3 + 2] = z;
    }

    const mb = s * 4;
    for (let i = 0; i < 3; i++) {
      means[s * 3 + i] =
        emb.meanWeights[mb] * v[i] +
        emb.meanWeights[mb + 1] * v[3 + i] +
        emb.meanWeights[mb + 2] * v[6 + i] +
        emb.meanWeights[mb + 3] * v[9 + i];
    }

    // F = [v1-v0 | v2-v0 | v3-v0] @ restInverseBasis
    const inv = emb.restInverseBasis;
    const ib = s * 9;
    for (let i = 0; i < 3; i++) {
      const e0 = v[3 + i] - v[i];
      const e1 = v[6 + i] - v[i];
      const e2 = v[9 + i] - v[i];
      for (let j = 0; j < 3; j++) {
        f[i * 3 + j] =
          e0 * inv[ib + j] + e1 * inv[ib + 3 + j] + e2 * inv[ib + 6 + j];
      }
    }
    const det =
      f[0] * (f[4] * f[8] - f[5] * f[7]) -
      f[1] * (f[3] * f[8] - f[5] * f[6]) +
      f[2] * (f[3] * f[7] - f[4] * f[6]);

    const cb = s * 9;
    if (det <= 0.0) {
      degenerate[s] = 1;
      const hold = previous !== null ? previous.covariances : emb.sigma0;
      for (let k = 0; k < 9; k++) covariances[cb + k] = hold[cb + k];
      continue;
    }

    // cov = F sigma0 F^T, symmetrized against rounding drift
    const s0 = emb.sigma0;
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        tmp[i * 3 + j] =
          f[i * 3] * s0[cb + j] +
          f[i * 3 + 1] * s0[cb + 3 + j] +
          f[i * 3 + 2] * s0[cb + 6 + j];
      }
    }
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        covariances[cb + i * 3 + j] =
          tmp[i * 3] * f[j * 3] +
          tmp[i * 3 + 1] * f[j * 3 + 1] +
          tmp[i * 3 + 2] * f[j * 3 + 2];
      }
    }
    for (let i = 0; i < 3; i++) {
      for (let j = i + 1; j < 3; j++) {
        const m =
          0.5 * (covariances[cb + i * 3 + j] + covariances[cb + j * 3 + i]);
        covariances[cb + i * 3 + j] = m;
        covariances[cb + j * 3 + i] = m;
      }
    }
  }
  return { means, covariances, degenerate };
}
