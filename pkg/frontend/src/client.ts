// Connection state machine over a pluggable byte transport (WebSocket in
// the browser, raw TCP in tests). The client speaks first: HELLO, then the
// server answers HELLO + SCENE_INIT and streams frames.

import {
  PROTOCOL_VERSION,
  ProtocolError,
  StreamDecoder,
  encode,
} from "./protocol";
import type {
  Drag,
  ErrorMsg,
  FrameMsg,
  Grab,
  LightMsg,
  Message,
  Release,
  SceneInit,
  SetParam,
} from "./protocol";

export interface Transport {
  send(data: Uint8Array): void;
  close(): void;
}

export interface ConnectionEvents {
  onSceneInit?: (msg: SceneInit) => void;
  onFrame?: (msg: FrameMsg) => void;
  onServerError?: (msg: ErrorMsg) => void;
  onFault?: (err: Error) => void;
}

type Phase = "hello" | "scene" | "stream" | "dead";

export class Connection {
  private decoder = new StreamDecoder();
  private phase: Phase = "hello";

  constructor(
    private transport: Transport,
    private events: ConnectionEvents = {},
  ) {}

  // Call once the transport is open.
  start(): void {
    this.transport.send(encode({ kind: "hello", version: PROTOCOL_VERSION }));
  }

  send(msg: Grab | Drag | Release | SetParam | LightMsg): void {
    if (this.phase !== "dead") {
      this.transport.send(encode(msg));
    }
  }

  feed(chunk: Uint8Array): void {
    if (this.phase === "dead") return;
    let messages: Message[];
    try {
      messages = this.decoder.feed(chunk);
    } catch (e) {
      this.fault(e instanceof Error ? e : new Error(String(e)));
      return;
    }
    for (const msg of messages) {
      if (this.isDead()) return;
      this.dispatch(msg);
    }
  }

  private isDead(): boolean {
    return this.phase === "dead";
  }

  private dispatch(msg: Message): void {
    if (msg.kind === "error") {
      this.events.onServerError?.(msg);
      return;
    }
    switch (this.phase) {
      case "hello":
        if (msg.kind !== "hello") {
          this.fault(new ProtocolError(`expected hello, got ${msg.kind}`));
          return;
        }
        if (msg.version !== PROTOCOL_VERSION) {
          this.fault(
            new ProtocolError(`server speaks version ${msg.version}`),
          );
          return;
        }
        this.phase = "scene";
        return;
      case "scene":
        if (msg.kind !== "sceneInit") {
          this.fault(new ProtocolError(`expected scene init, got ${msg.kind}`));
          return;
        }
        this.phase = "stream";
        this.events.onSceneInit?.(msg);
        return;
      case "stream":
        if (msg.kind === "frame") {
          this.events.onFrame?.(msg);
          return;
        }
        // anything else from the server mid-stream is a protocol fault
        this.fault(new ProtocolError(`unexpected ${msg.kind} mid-stream`));
        return;
      case "dead":
        return;
    }
  }

  private fault(err: Error): void {
    this.phase = "dead";
    this.events.onFault?.(err);
    this.transport.close();
  }
}
