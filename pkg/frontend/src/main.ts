// Browser entry: connect over WebSocket, decode the scene, and redraw the
// canvas whenever a frame or the camera changes (the depth sort lives
// inside the redraw, so it recomputes exactly then). Mouse: press picks and
// grabs, move drags at most once per animation frame, release lets go.

import { Connection, type Transport } from "./client";
import { makeCamera, type Camera } from "./camera";
import { InteractionState } from "./input";
import { renderImage, toUint8 } from "./renderer";
import { ClientScene } from "./scene";

const params = new URLSearchParams(window.location.search);
const host = params.get("host") ?? window.location.hostname ?? "localhost";
const port = params.get("port") ?? "9870";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const status = document.getElementById("status") as HTMLElement;
const ctx = canvas.getContext("2d")!;

let scene: ClientScene | null = null;
let camera: Camera | null = null;
let dirty = false;
let pendingDrag: { x: number; y: number } | null = null;
let connection: Connection | null = null;
const input = new InteractionState();

function say(text: string): void {
  status.textContent = text;
}

function fitCamera(s: ClientScene): Camera {
  // frame the splat cloud: look at its center from south-west of it
  const n = s.splats.count;
  const c = [0, 0, 0];
  for (let i = 0; i < n; i++) {
    c[0] += s.transforms.means[i * 3];
    c[1] += s.transforms.means[i * 3 + 1];
    c[2] += s.transforms.means[i * 3 + 2];
  }
  for (let k = 0; k < 3; k++) c[k] /= Math.max(n, 1);
  let radius = 0.1;
  for (let i = 0; i < n; i++) {
    const dx = s.transforms.means[i * 3] - c[0];
    const dy = s.transforms.means[i * 3 + 1] - c[1];
    const dz = s.transforms.means[i * 3 + 2] - c[2];
    radius = Math.max(radius, Math.hypot(dx, dy, dz));
  }
  return makeCamera({
    position: [c[0], c[1] + 0.6 * radius, c[2] - 2.8 * radius],
    lookAt: [c[0], c[1], c[2]],
    width: canvas.width,
    height: canvas.height,
  });
}

function redraw(): void {
  if (!scene || !camera) return;
  const img = renderImage(
    scene.transforms.means,
    scene.transforms.covariances,
    scene.splats.sh,
    scene.opacities,
    scene.splats.count,
    camera,
  );
  const bytes = toUint8(img);
  const rgba = new Uint8ClampedArray(camera.width * camera.height * 4);
  for (let p = 0; p < camera.width * camera.height; p++) {
    rgba[p * 4] = bytes[p * 3];
    rgba[p * 4 + 1] = bytes[p * 3 + 1];
    rgba[p * 4 + 2] = bytes[p * 3 + 2];
    rgba[p * 4 + 3] = 255;
  }
  ctx.putImageData(new ImageData(rgba, camera.width, camera.height), 0, 0);
}

function tick(): void {
  if (pendingDrag && camera && connection) {
    // drags are rate-limited to the animation frame
    const msg = input.mouseMove(pendingDrag.x, pendingDrag.y, camera);
    pendingDrag = null;
    if (msg) connection.send(msg);
  }
  if (dirty) {
    dirty = false;
    redraw();
  }
  requestAnimationFrame(tick);
}

function canvasXY(ev: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

canvas.addEventListener("mousedown", (ev) => {
  if (!scene || !camera || !connection) return;
  const { x, y } = canvasXY(ev);
  const msg = input.mouseDown(x, y, camera, scene);
  if (msg) connection.send(msg);
});

canvas.addEventListener("mousemove", (ev) => {
  if (!input.holding) return;
  pendingDrag = canvasXY(ev);
});

window.addEventListener("mouseup", () => {
  const msg = input.mouseUp();
  if (msg && connection) connection.send(msg);
});

function connect(): void {
  say(`connecting to ${host}:${port} ...`);
  const ws = new WebSocket(`ws://${host}:${port}/`);
  ws.binaryType = "arraybuffer";
  const transport: Transport = {
    send: (data) => ws.send(data),
    close: () => ws.close(),
  };
  const conn = new Connection(transport, {
    onSceneInit: (msg) => {
      scene = ClientScene.fromSceneInit(msg);
      camera = fitCamera(scene);
      dirty = true;
      say(
        `${scene.splats.count} splats, ${scene.cage.vertexCount} cage vertices, ` +
          `objects: ${scene.objects.map((o) => o.name).join(", ")}`,
      );
    },
    onFrame: (msg) => {
      if (scene && scene.applyFrame(msg)) {
        dirty = true;
      }
    },
    onServerError: (msg) => say(`server: ${msg.message}`),
    onFault: (err) => say(`protocol fault: ${err.message}`),
  });
  ws.onopen = () => conn.start();
  ws.onmessage = (ev) => conn.feed(new Uint8Array(ev.data as ArrayBuffer));
  ws.onclose = () => {
    input.disconnected(); // never carry a grab across connections
    pendingDrag = null;
    connection = null;
    say("disconnected, retrying in 2s");
    setTimeout(connect, 2000);
  };
  connection = conn;
}

connect();
requestAnimationFrame(tick);
