// Software splat rasterizer: perspective EWA projection of each Gaussian
// (Jacobian at the mean, 0.3 px^2 dilation), one global front-to-back depth
// order, alpha blending over black. Mirrors the engine renderer so server
// PNGs and client canvases agree; shadowing stays server-side.

import type { Camera } from "./camera";

export const ALPHA_CUTOFF = 1.0 / 255.0;
export const TRANSMITTANCE_CUTOFF = 1e-4;
export const COV2D_DILATION = 0.3; // px^2

const SH_C0 = 0.28209479177387814;
const SH_C1 = 0.4886025119029199;
const SH_C2 = [
  1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
  -1.0925484305920792, 0.5462742152960396,
];
const SH_C3 = [
  -0.5900435899266435, 2.890611442640554, -0.4570457994644658,
  0.3731763325901154, -0.4570457994644658, 1.445305721320277,
  -0.5900435899266435,
];

export function sigmoid(x: number): number {
  if (x >= 0) return 1.0 / (1.0 + Math.exp(-x));
  const ex = Math.exp(x);
  return ex / (1.0 + ex);
}

// Degree-3 SH evaluated per splat along its unit view direction; +0.5 DC
// shift, clamped to [0,1]. sh is (n,3,16) flat, dirs (n,3) flat.
export function evalShBatch(
  sh: ArrayLike<number>,
  dirs: ArrayLike<number>,
  n: number,
): Float64Array {
  const out = new Float64Array(n * 3);
  for (let s = 0; s < n; s++) {
    const x = dirs[s * 3];
    const y = dirs[s * 3 + 1];
    const z = dirs[s * 3 + 2];
    const xx = x * x;
    const yy = y * y;
    const zz = z * z;
    const xy = x * y;
    const yz = y * z;
    const xz = x * z;
    for (let c = 0; c < 3; c++) {
      const b = (s * 3 + c) * 16;
      let res = SH_C0 * sh[b];
      res -= SH_C1 * y * sh[b + 1];
      res += SH_C1 * z * sh[b + 2];
      res -= SH_C1 * x * sh[b + 3];
      res += SH_C2[0] * xy * sh[b + 4];
      res += SH_C2[1] * yz * sh[b + 5];
      res += SH_C2[2] * (2 * zz - xx - yy) * sh[b + 6];
      res += SH_C2[3] * xz * sh[b + 7];
      res += SH_C2[4] * (xx - yy) * sh[b + 8];
      res += SH_C3[0] * (y * (3 * xx - yy)) * sh[b + 9];
      res += SH_C3[1] * (xy * z) * sh[b + 10];
      res += SH_C3[2] * (y * (4 * zz - xx - yy)) * sh[b + 11];
      res += SH_C3[3] * (z * (2 * zz - 3 * xx - 3 * yy)) * sh[b + 12];
      res += SH_C3[4] * (x * (4 * zz - xx - yy)) * sh[b + 13];
      res += SH_C3[5] * (z * (xx - yy)) * sh[b + 14];
      res += SH_C3[6] * (x * (xx - 3 * yy)) * sh[b + 15];
      res += 0.5;
      out[s * 3 + c] = res < 0 ? 0 : res > 1 ? 1 : res;
    }
  }
  return out;
}

export interface Projection {
  xy: Float64Array; // (n,2) pixel centers
  cov2d: Float64Array; // (n,3) packed symmetric (a, b, c)
  depth: Float64Array; // (n) view-space z
  keep: Uint8Array; // (n) in front of the near plane
}

export function projectSplats(
  means: ArrayLike<number>,
  covariances: ArrayLike<number>,
  n: number,
  camera: Camera,
): Projection {
  const r = camera.rotation;
  const f = camera.focalPx;
  const xy = new Float64Array(n * 2);
  const cov2d = new Float64Array(n * 3);
  const depth = new Float64Array(n);
  const keep = new Uint8Array(n);
  const px = camera.position[0];
  const py = camera.position[1];
  const pz = camera.position[2];

  for (let s = 0; s < n; s++) {
    const wx = means[s * 3] - px;
    const wy = means[s * 3 + 1] - py;
    const wz = means[s * 3 + 2] - pz;
    const vx = r[0] * wx + r[1] * wy + r[2] * wz;
    const vy = r[3] * wx + r[4] * wy + r[5] * wz;
    const vz = r[6] * wx + r[7] * wy + r[8] * wz;
    depth[s] = vz;
    const inFront = vz > camera.near;
    keep[s] = inFront ? 1 : 0;
    const z = inFront ? vz : 1.0;
    xy[s * 2] = camera.cx + (f * vx) / z;
    xy[s * 2 + 1] = camera.cy - (f * vy) / z;

    // view-space covariance R S R^T
    const c = covariances;
    const b = s * 9;
    const rs = new Float64Array(9);
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        rs[i * 3 + j] =
          r[i * 3] * c[b + j] +
          r[i * 3 + 1] * c[b + 3 + j] +
          r[i * 3 + 2] * c[b + 6 + j];
      }
    }
    const cv = new Float64Array(9);
    for (let i = 0; i < 3; i++) {
      for (let j = 0; j < 3; j++) {
        cv[i * 3 + j] =
          rs[i * 3] * r[j * 3] +
          rs[i * 3 + 1] * r[j * 3 + 1] +
          rs[i * 3 + 2] * r[j * 3 + 2];
      }
    }

    // jacobian rows of (px, py) wrt view coords
    const j00 = f / z;
    const j02 = (-f * vx) / (z * z);
    const j11 = -f / z;
    const j12 = (f * vy) / (z * z);
    // row vectors of J * cov_view
    const t00 = j00 * cv[0] + j02 * cv[6];
    const t01 = j00 * cv[1] + j02 * cv[7];
    const t02 = j00 * cv[2] + j02 * cv[8];
    const t11 = j11 * cv[4] + j12 * cv[7];
    const t12 = j11 * cv[5] + j12 * cv[8];
    cov2d[s * 3] = t00 * j00 + t02 * j02 + COV2D_DILATION;
    cov2d[s * 3 + 1] = t01 * j11 + t02 * j12;
    cov2d[s * 3 + 2] = t11 * j11 + t12 * j12 + COV2D_DILATION;
  }
  return { xy, cov2d, depth, keep };
}

// Stable front-to-back order over the splats in front of the near plane.
export function depthOrder(proj: Projection): Int32Array {
  const idx: number[] = [];
  for (let s = 0; s < proj.keep.length; s++) {
    if (proj.keep[s]) idx.push(s);
  }
  idx.sort((a, b) => proj.depth[a] - proj.depth[b]);
  return Int32Array.from(idx);
}

export function splatColors(
  means: ArrayLike<number>,
  sh: ArrayLike<number>,
  n: number,
  cameraPosition: readonly number[],
): Float64Array {
  const dirs = new Float64Array(n * 3);
  for (let s = 0; s < n; s++) {
    const dx = means[s * 3] - cameraPosition[0];
    const dy = means[s * 3 + 1] - cameraPosition[1];
    const dz = means[s * 3 + 2] - cameraPosition[2];
    let d = Math.hypot(dx, dy, dz);
    if (d < 1e-12) d = 1.0;
    dirs[s * 3] = dx / d;
    dirs[s * 3 + 1] = dy / d;
    dirs[s * 3 + 2] = dz / d;
  }
  return evalShBatch(sh, dirs, n);
}

export function blend(
  proj: Projection,
  order: ArrayLike<number>,
  colors: ArrayLike<number>,
  opacities: ArrayLike<number>,
  width: number,
  height: number,
): Float64Array {
  const image = new Float64Array(height * width * 3);
  const transmittance = new Float64Array(height * width).fill(1.0);

  for (let k = 0; k < order.length; k++) {
    const i = order[k];
    const a = proj.cov2d[i * 3];
    const b = proj.cov2d[i * 3 + 1];
    const c = proj.cov2d[i * 3 + 2];
    const det = a * c - b * b;
    if (det <= 0) continue;
    const lamMax =
      0.5 * (a + c) + Math.sqrt(Math.max(0.25 * (a - c) * (a - c) + b * b, 0));
    const radius = 3.5 * Math.sqrt(lamMax);
    const mx = proj.xy[i * 2];
    const my = proj.xy[i * 2 + 1];
    const x0 = Math.max(Math.floor(mx - radius), 0);
    const x1 = Math.min(Math.ceil(mx + radius) + 1, width);
    const y0 = Math.max(Math.floor(my - radius), 0);
    const y1 = Math.min(Math.ceil(my + radius) + 1, height);
    if (x0 >= x1 || y0 >= y1) continue;
    const op = opacities[i];
    const cr = colors[i * 3];
    const cg = colors[i * 3 + 1];
    const cb = colors[i * 3 + 2];

    for (let yp = y0; yp < y1; yp++) {
      const dy = yp - my;
      for (let xp = x0; xp < x1; xp++) {
        const dx = xp - mx;
        const t = transmittance[yp * width + xp];
        // quadratic form with the inverse 2x2 covariance
        const q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        const alpha = op * Math.exp(-0.5 * q);
        if (alpha < ALPHA_CUTOFF || t <= TRANSMITTANCE_CUTOFF) continue;
        const p = (yp * width + xp) * 3;
        const ta = t * alpha;
        image[p] += ta * cr;
        image[p + 1] += ta * cg;
        image[p + 2] += ta * cb;
        transmittance[yp * width + xp] = t * (1.0 - alpha);
      }
    }
  }
  return image;
}

// Full pipeline over a black background; float RGB in [0,1], (h,w,3) flat.
export function renderImage(
  means: ArrayLike<number>,
  covariances: ArrayLike<number>,
  sh: ArrayLike<number>,
  opacities: ArrayLike<number>,
  n: number,
  camera: Camera,
): Float64Array {
  const proj = projectSplats(means, covariances, n, camera);
  const colors = splatColors(means, sh, n, camera.position);
  const order = depthOrder(proj);
  const image = blend(
    proj,
    order,
    colors,
    opacities,
    camera.width,
    camera.height,
  );
  for (let i = 0; i < image.length; i++) {
    const v = image[i];
    image[i] = v < 0 ? 0 : v > 1 ? 1 : v;
  }
  return image;
}

// Round-half-to-even quantization of a [0,1] float image to bytes.
export function toUint8(image: Float64Array): Uint8ClampedArray {
  const out = new Uint8ClampedArray(image.length);
  for (let i = 0; i < image.length; i++) {
    const x = image[i] * 255.0;
    let r = Math.round(x);
    if (Math.abs(x - Math.trunc(x)) === 0.5 && r % 2 !== 0) r -= 1;
    out[i] = r;
  }
  return out;
}
