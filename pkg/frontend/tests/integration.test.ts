// End-to-end against a live engine server: handshake, scene decode, then a
// scripted grab-and-drag must visibly move the object within ten frames.
// The test transport is a raw TCP socket; the browser uses WebSocket over
// the same byte stream.

import { type ChildProcess, spawn } from "node:child_process";
import { createConnection, type Socket } from "node:net";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { Connection, type Transport } from "../src/client";
import type { FrameMsg, SceneInit } from "../src/protocol";
import { ClientScene } from "../src/scene";
import { fixturePath } from "./helpers";

const START_TIMEOUT = 90_000; // fresh interpreter may recompile kernels

let server: ChildProcess;
let socket: Socket;
let connection: Connection;
let scene: ClientScene | null = null;
let stderrTail = "";

const frameQueue: FrameMsg[] = [];
let frameWaiter: ((msg: FrameMsg) => void) | null = null;
let sceneWaiter: ((msg: SceneInit) => void) | null = null;
let fault: Error | null = null;

function nextFrame(timeoutMs = 30_000): Promise<FrameMsg> {
  const queued = frameQueue.shift();
  if (queued) return Promise.resolve(queued);
  return new Promise((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`no frame within ${timeoutMs}ms\n${stderrTail}`)),
      timeoutMs,
    );
    frameWaiter = (msg) => {
      clearTimeout(timer);
      frameWaiter = null;
      resolve(msg);
    };
  });
}

function centroid(means: Float64Array): [number, number, number] {
  const c: [number, number, number] = [0, 0, 0];
  const n = means.length / 3;
  for (let i = 0; i < n; i++) {
    c[0] += means[i * 3];
    c[1] += means[i * 3 + 1];
    c[2] += means[i * 3 + 2];
  }
  return [c[0] / n, c[1] / n, c[2] / n];
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "splatdyn", "serve", fixturePath("pull.vrgs"), "--port", "0"],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  server.stderr!.on("data", (d: Buffer) => {
    stderrTail = (stderrTail + d.toString()).slice(-2000);
  });

  const port = await new Promise<number>((resolve, reject) => {
    let out = "";
    const timer = setTimeout(
      () =>
        reject(new Error(`server never came up: ${out}\n${stderrTail}`)),
      START_TIMEOUT,
    );
    server.stdout!.on("data", (d: Buffer) => {
      out += d.toString();
      const m = out.match(/listening on [^:]+:(\d+)/);
      if (m) {
        clearTimeout(timer);
        resolve(Number(m[1]));
      }
    });
    server.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`server exited early (${code}): ${out}\n${stderrTail}`));
    });
  });

  socket = createConnection({ host: "127.0.0.1", port });
  await new Promise<void>((resolve, reject) => {
    socket.once("connect", () => resolve());
    socket.once("error", (e) => reject(e));
  });
  const transport: Transport = {
    send: (data) => socket.write(data),
    close: () => socket.destroy(),
  };
  connection = new Connection(transport, {
    onSceneInit: (msg) => sceneWaiter?.(msg),
    onFrame: (msg) => {
      if (frameWaiter) frameWaiter(msg);
      else frameQueue.push(msg);
    },
    onFault: (err) => {
      fault = err;
    },
  });
  socket.on("data", (d: Buffer) => connection.feed(new Uint8Array(d)));

  const init = new Promise<SceneInit>((resolve, reject) => {
    const timer = setTimeout(
      () => reject(new Error(`no scene init\n${stderrTail}`)),
      START_TIMEOUT,
    );
    sceneWaiter = (msg) => {
      clearTimeout(timer);
      resolve(msg);
    };
  });
  connection.start();
  scene = ClientScene.fromSceneInit(await init);
}, START_TIMEOUT + 10_000);

afterAll(() => {
  socket?.destroy();
  server?.kill("SIGTERM");
});

describe("live server session", () => {
  it(
    "streams decodable frames with increasing ids",
    async () => {
      expect(scene).not.toBeNull();
      const a = await nextFrame();
      scene!.applyFrame(a);
      const b = await nextFrame();
      expect(b.frameId).toBeGreaterThan(a.frameId);
      expect(b.positions.length).toBe(scene!.cage.vertexCount * 3);
      expect(fault).toBeNull();
    },
    60_000,
  );

  it(
    "grab plus drag moves the object at least a centimeter within 10 frames",
    async () => {
      const rest = centroid(scene!.transforms.means);
      frameQueue.length = 0; // count only frames after the interaction
      connection.send({
        kind: "grab",
        objectId: 0,
        point: [0, 0, 0],
        radius: 0.15,
      });
      connection.send({ kind: "drag", target: [0.15, 0, 0] });

      let moved = 0;
      let frames = 0;
      while (frames < 10 && moved < 0.01) {
        const msg = await nextFrame();
        frames++;
        if (!scene!.applyFrame(msg)) continue;
        const c = centroid(scene!.transforms.means);
        moved = Math.hypot(c[0] - rest[0], c[1] - rest[1], c[2] - rest[2]);
      }
      connection.send({ kind: "release" });
      expect(fault).toBeNull();
      expect(moved).toBeGreaterThanOrEqual(0.01);
      expect(frames).toBeLessThanOrEqual(10);
    },
    90_000,
  );
});
