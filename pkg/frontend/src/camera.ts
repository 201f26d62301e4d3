// Pinhole camera: world-to-view rotation rows are right, up, forward.

import { cross, normalize3, type Mat3, type V3 } from "./mat3";

export interface CameraParams {
  position: V3;
  lookAt: V3;
  up?: V3;
  fovY?: number; // radians
  width: number;
  height: number;
  near?: number;
  far?: number;
}

export interface Camera {
  position: V3;
  lookAt: V3;
  up: V3;
  fovY: number;
  width: number;
  height: number;
  near: number;
  far: number;
  rotation: Mat3; // rows: right, up, forward
  focalPx: number;
  cx: number;
  cy: number;
}

export function makeCamera(params: CameraParams): Camera {
  const up: V3 = params.up ?? [0, 1, 0];
  const fovY = params.fovY ?? (50.0 * Math.PI) / 180.0;
  const near = params.near ?? 0.01;
  const far = params.far ?? 100.0;
  if (!(fovY > 0 && fovY < Math.PI)) {
    throw new Error("vertical fov must lie in (0, pi)");
  }
  if (params.width < 1 || params.height < 1) {
    throw new Error("resolution must be at least 1x1");
  }
  if (!(near > 0 && near < far)) {
    throw new Error("need 0 < near < far");
  }
  const fwdRaw: V3 = [
    params.lookAt[0] - params.position[0],
    params.lookAt[1] - params.position[1],
    params.lookAt[2] - params.position[2],
  ];
  const fwd = normalize3(fwdRaw);
  const rightRaw = cross(up, fwd);
  let right: [number, number, number];
  try {
    right = normalize3(rightRaw);
  } catch {
    throw new Error("up vector parallel to view direction");
  }
  const trueUp = cross(fwd, right);
  const rotation = new Float64Array(9);
  rotation.set(right, 0);
  rotation.set(trueUp, 3);
  rotation.set(fwd, 6);
  return {
    position: params.position,
    lookAt: params.lookAt,
    up,
    fovY,
    width: params.width,
    height: params.height,
    near,
    far,
    rotation,
    focalPx: (0.5 * params.height) / Math.tan(0.5 * fovY),
    cx: 0.5 * (params.width - 1),
    cy: 0.5 * (params.height - 1),
  };
}
