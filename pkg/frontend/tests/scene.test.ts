// Cross-implementation agreement: transforms computed from engine frames
// must match the engine's own deformation output to 1e-5, including which
// splats were flagged degenerate. Also the frame-ordering rules.

import { beforeAll, describe, expect, it } from "vitest";
import { decode, type FrameMsg, type SceneInit } from "../src/protocol";
import { ClientScene } from "../src/scene";
import { b64ToBytes, b64ToF32, b64ToF64, loadFixture } from "./helpers";

interface SceneFixture {
  sceneInitMessage: string;
  splats: number;
  cageVertices: number;
}

interface FramesFixture {
  frames: { id: number; positions: string }[];
  expected: { means: string; covariances: string; degenerate: string }[];
}

const sceneFx = loadFixture<SceneFixture>("scene.json");
const framesFx = loadFixture<FramesFixture>("frames.json");

function decodeSceneInit(b64: string): SceneInit {
  const [msg] = decode(b64ToBytes(b64));
  if (!msg || msg.kind !== "sceneInit") throw new Error("bad scene fixture");
  return msg;
}

function frameMsg(fx: { id: number; positions: string }): FrameMsg {
  return {
    kind: "frame",
    frameId: BigInt(fx.id),
    positions: b64ToF32(fx.positions),
  };
}

function maxAbsDiff(a: ArrayLike<number>, b: ArrayLike<number>): number {
  expect(a.length).toBe(b.length);
  let worst = 0;
  for (let i = 0; i < a.length; i++) {
    worst = Math.max(worst, Math.abs(a[i] - b[i]));
  }
  return worst;
}

describe("scene decoding", () => {
  let scene: ClientScene;
  beforeAll(() => {
    scene = ClientScene.fromSceneInit(decodeSceneInit(sceneFx.sceneInitMessage));
  });

  it("recovers the advertised splat and cage counts", () => {
    expect(scene.splats.count).toBe(sceneFx.splats);
    expect(scene.cage.vertexCount).toBe(sceneFx.cageVertices);
    expect(scene.embedding.count).toBe(sceneFx.splats);
    expect(scene.objects.length).toBeGreaterThan(0);
  });

  it("reconstructs exact partitions of unity from the float32 blob", () => {
    const { meanWeights, weights, count } = scene.embedding;
    for (let s = 0; s < count; s++) {
      const m =
        meanWeights[s * 4] + meanWeights[s * 4 + 1] +
        meanWeights[s * 4 + 2] + meanWeights[s * 4 + 3];
      expect(m).toBe(1.0);
      for (let v = 0; v < 4; v++) {
        const b = (s * 4 + v) * 4;
        expect(weights[b] + weights[b + 1] + weights[b + 2] + weights[b + 3]).toBe(1.0);
      }
    }
  });

  it("holds rest transforms before any frame arrives", () => {
    // the float32 blob round trip perturbs rest F away from identity by
    // ~1e-7, so rest covariances sit near sigma0 rather than on it
    expect(
      maxAbsDiff(scene.transforms.covariances, scene.embedding.sigma0),
    ).toBeLessThan(1e-8);
    expect(maxAbsDiff(scene.transforms.means, scene.splats.means)).toBeLessThan(1e-5);
    for (const d of scene.transforms.degenerate) expect(d).toBe(0);
  });
});

describe("frame agreement with the engine", () => {
  it("matches engine means/covariances to 1e-5 across all frames", () => {
    const scene = ClientScene.fromSceneInit(
      decodeSceneInit(sceneFx.sceneInitMessage),
    );
    let sawDegenerate = 0;
    framesFx.frames.forEach((fx, k) => {
      expect(scene.applyFrame(frameMsg(fx))).toBe(true);
      const want = framesFx.expected[k];
      const wantDegenerate = b64ToBytes(want.degenerate);
      expect(maxAbsDiff(scene.transforms.means, b64ToF64(want.means))).toBeLessThan(1e-5);
      expect(
        maxAbsDiff(scene.transforms.covariances, b64ToF64(want.covariances)),
      ).toBeLessThan(1e-5);
      for (let s = 0; s < wantDegenerate.length; s++) {
        expect(scene.transforms.degenerate[s]).toBe(wantDegenerate[s]);
      }
      sawDegenerate += scene.transforms.degenerate.reduce((a, d) => a + d, 0);
    });
    // the fixture set includes a folded cage, so held covariances were hit
    expect(sawDegenerate).toBeGreaterThan(0);
  });

  it("keeps the rest pose on a frame at the rest positions", () => {
    const scene = ClientScene.fromSceneInit(
      decodeSceneInit(sceneFx.sceneInitMessage),
    );
    const rest = framesFx.frames[0]; // frame 1 is the rest pose
    const restMeans = scene.transforms.means.slice();
    expect(scene.applyFrame(frameMsg(rest))).toBe(true);
    expect(maxAbsDiff(scene.transforms.means, restMeans)).toBeLessThan(1e-5);
    expect(
      maxAbsDiff(scene.transforms.covariances, scene.embedding.sigma0),
    ).toBeLessThan(1e-5);
  });
});

describe("frame ordering", () => {
  it("drops stale and duplicate frames without touching the display", () => {
    const scene = ClientScene.fromSceneInit(
      decodeSceneInit(sceneFx.sceneInitMessage),
    );
    expect(scene.applyFrame(frameMsg(framesFx.frames[0]))).toBe(true);
    expect(scene.applyFrame(frameMsg(framesFx.frames[2]))).toBe(true);
    const held = scene.transforms;

    // older id, duplicate id: both refused, transforms object untouched
    expect(scene.applyFrame(frameMsg(framesFx.frames[1]))).toBe(false);
    expect(scene.applyFrame(frameMsg(framesFx.frames[2]))).toBe(false);
    expect(scene.transforms).toBe(held);
    expect(scene.lastFrameId).toBe(BigInt(framesFx.frames[2].id));

    // the next id is accepted again
    expect(scene.applyFrame(frameMsg(framesFx.frames[3]))).toBe(true);
    expect(scene.transforms).not.toBe(held);
  });

  it("refuses frames sized for a different cage", () => {
    const scene = ClientScene.fromSceneInit(
      decodeSceneInit(sceneFx.sceneInitMessage),
    );
    const bad: FrameMsg = {
      kind: "frame",
      frameId: 99n,
      positions: new Float32Array(3),
    };
    expect(() => scene.applyFrame(bad)).toThrow();
  });
});
