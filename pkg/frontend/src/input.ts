// Mouse interaction state machine. A press ray-picks the nearest splat mean
// within a screen-space radius and opens a grab on that splat's object;
// moves while held emit drag targets on the view-parallel plane through the
// grab point; release closes the grab. Clicking empty sky does nothing.
// A transport drop clears the hold so a reconnect never sees a stale drag.

import type { Camera } from "./camera";
import { projectSplats } from "./renderer";
import type { ClientScene } from "./scene";
import type { Drag, Grab, Release } from "./protocol";

export class InteractionState {
  private heldViewZ: number | null = null;

  constructor(
    readonly pickRadiusPx: number = 12.0,
    readonly grabRadiusWorld: number = 0.15,
  ) {}

  get holding(): boolean {
    return this.heldViewZ !== null;
  }

  mouseDown(
    x: number,
    y: number,
    camera: Camera,
    scene: ClientScene,
  ): Grab | null {
    const { means } = scene.transforms;
    const n = scene.splats.count;
    const proj = projectSplats(means, scene.transforms.covariances, n, camera);
    let best = -1;
    let bestDepth = Infinity;
    const r2 = this.pickRadiusPx * this.pickRadiusPx;
    for (let s = 0; s < n; s++) {
      if (!proj.keep[s]) continue;
      const dx = proj.xy[s * 2] - x;
      const dy = proj.xy[s * 2 + 1] - y;
      if (dx * dx + dy * dy > r2) continue;
      if (proj.depth[s] < bestDepth) {
        bestDepth = proj.depth[s];
        best = s;
      }
    }
    if (best < 0) {
      return null;
    }
    this.heldViewZ = bestDepth;
    return {
      kind: "grab",
      objectId: scene.splats.labels[best],
      point: [means[best * 3], means[best * 3 + 1], means[best * 3 + 2]],
      radius: this.grabRadiusWorld,
    };
  }

  mouseMove(x: number, y: number, camera: Camera): Drag | null {
    if (this.heldViewZ === null) {
      return null;
    }
    // unproject onto the plane of constant view depth through the grab
    const z = this.heldViewZ;
    const vx = ((x - camera.cx) / camera.focalPx) * z;
    const vy = (-(y - camera.cy) / camera.focalPx) * z;
    const r = camera.rotation;
    const p = camera.position;
    return {
      kind: "drag",
      target: [
        p[0] + r[0] * vx + r[3] * vy + r[6] * z,
        p[1] + r[1] * vx + r[4] * vy + r[7] * z,
        p[2] + r[2] * vx + r[5] * vy + r[8] * z,
      ],
    };
  }

  mouseUp(): Release | null {
    if (this.heldViewZ === null) {
      return null;
    }
    this.heldViewZ = null;
    return { kind: "release" };
  }

  disconnected(): void {
    this.heldViewZ = null;
  }
}
