// Mouse gesture state machine: pick-and-grab, drag targets, release, and
// the no-stale-drag guarantee across disconnects.

import { beforeEach, describe, expect, it } from "vitest";
import { makeCamera, type Camera } from "../src/camera";
import { InteractionState } from "../src/input";
import { projectSplats } from "../src/renderer";
import { decode } from "../src/protocol";
import { ClientScene } from "../src/scene";
import { b64ToBytes, loadFixture, type CameraFixture } from "./helpers";

interface SceneFixture {
  sceneInitMessage: string;
  camera: CameraFixture;
}

const fx = loadFixture<SceneFixture>("scene.json");

function buildScene(): ClientScene {
  const [msg] = decode(b64ToBytes(fx.sceneInitMessage));
  if (!msg || msg.kind !== "sceneInit") throw new Error("bad fixture");
  return ClientScene.fromSceneInit(msg);
}

function buildCamera(): Camera {
  return makeCamera({
    position: fx.camera.position as [number, number, number],
    lookAt: fx.camera.look_at as [number, number, number],
    up: fx.camera.up as [number, number, number],
    fovY: fx.camera.fov_y,
    width: fx.camera.width,
    height: fx.camera.height,
    near: fx.camera.near,
    far: fx.camera.far,
  });
}

describe("pick and grab", () => {
  let scene: ClientScene;
  let camera: Camera;
  let input: InteractionState;

  beforeEach(() => {
    scene = buildScene();
    camera = buildCamera();
    input = new InteractionState(12.0, 0.15);
  });

  // the frontmost splat wins any pick at its own pixel, which makes the
  // expected grab deterministic
  function frontmost(): { s: number; x: number; y: number } {
    const proj = projectSplats(
      scene.transforms.means,
      scene.transforms.covariances,
      scene.splats.count,
      camera,
    );
    let s = -1;
    let depth = Infinity;
    for (let i = 0; i < scene.splats.count; i++) {
      if (proj.keep[i] && proj.depth[i] < depth) {
        depth = proj.depth[i];
        s = i;
      }
    }
    expect(s).toBeGreaterThanOrEqual(0);
    return { s, x: proj.xy[s * 2], y: proj.xy[s * 2 + 1] };
  }

  it("clicking a splat opens a grab on its object at its mean", () => {
    const { s, x, y } = frontmost();
    const grab = input.mouseDown(x, y, camera, scene);
    expect(grab).not.toBeNull();
    expect(grab!.kind).toBe("grab");
    expect(grab!.radius).toBeCloseTo(0.15, 12);
    expect(input.holding).toBe(true);

    const m = scene.transforms.means;
    expect(grab!.point).toEqual([m[s * 3], m[s * 3 + 1], m[s * 3 + 2]]);
    expect(grab!.objectId).toBe(scene.splats.labels[s]);
  });

  it("clicking empty sky emits nothing", () => {
    const grab = input.mouseDown(1, 1, camera, scene);
    expect(grab).toBeNull();
    expect(input.holding).toBe(false);
    expect(input.mouseMove(5, 5, camera)).toBeNull();
    expect(input.mouseUp()).toBeNull();
  });

  it("dragging right yields monotonically increasing target x", () => {
    const { x, y } = frontmost();
    expect(input.mouseDown(x, y, camera, scene)).not.toBeNull();
    let prev = -Infinity;
    for (const dx of [8, 16, 24, 40]) {
      const drag = input.mouseMove(x + dx, y, camera);
      expect(drag).not.toBeNull();
      expect(drag!.kind).toBe("drag");
      expect(drag!.target[0]).toBeGreaterThan(prev);
      prev = drag!.target[0];
    }
    const release = input.mouseUp();
    expect(release).not.toBeNull();
    expect(release!.kind).toBe("release");
    expect(input.holding).toBe(false);
  });

  it("keeps the drag plane at the grab depth", () => {
    const { x, y } = frontmost();
    const grab = input.mouseDown(x, y, camera, scene)!;
    const drag = input.mouseMove(x, y, camera)!;
    // not moving the mouse drags toward the grabbed splat itself
    for (let k = 0; k < 3; k++) {
      expect(drag.target[k]).toBeCloseTo(grab.point[k], 6);
    }
  });

  it("a disconnect mid-hold clears the grab so no stale drag leaks", () => {
    const { x, y } = frontmost();
    expect(input.mouseDown(x, y, camera, scene)).not.toBeNull();
    expect(input.holding).toBe(true);
    input.disconnected();
    expect(input.holding).toBe(false);
    expect(input.mouseMove(x + 20, y, camera)).toBeNull();
    expect(input.mouseUp()).toBeNull();
  });
});
