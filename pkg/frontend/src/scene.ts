// Client-side scene state: the decoded splat/cage/binding tables from the
// scene-init message plus the latest accepted frame. Frame ids must be
// strictly increasing; stale or duplicate frames leave the display unchanged.

import { applyFrame, parseEmbedding, EmbeddingError } from "./embedding";
import type { EmbeddingData, SplatTransforms } from "./embedding";
import { parsePly, type SplatData } from "./ply";
import { parseTetmesh, type TetMeshData } from "./tetmesh";
import { sigmoid } from "./renderer";
import type { FrameMsg, SceneInit, SceneObject } from "./protocol";

export class ClientScene {
  readonly splats: SplatData;
  readonly cage: TetMeshData;
  readonly embedding: EmbeddingData;
  readonly objects: SceneObject[];
  readonly opacities: Float64Array;
  transforms: SplatTransforms;
  lastFrameId: bigint = -1n;

  private constructor(
    splats: SplatData,
    cage: TetMeshData,
    embedding: EmbeddingData,
    objects: SceneObject[],
  ) {
    this.splats = splats;
    this.cage = cage;
    this.embedding = embedding;
    this.objects = objects;
    this.opacities = new Float64Array(splats.count);
    for (let i = 0; i < splats.count; i++) {
      this.opacities[i] = sigmoid(splats.opacityLogits[i]);
    }
    // rest transforms from the undeformed cage
    this.transforms = applyFrame(embedding, cage, cage.vertices, null);
  }

  static fromSceneInit(msg: SceneInit): ClientScene {
    const splats = parsePly(msg.splatBlob);
    const cage = parseTetmesh(new TextDecoder("ascii").decode(msg.tetmeshBlob));
    const embedding = parseEmbedding(msg.embeddingBlob);
    if (embedding.count !== splats.count) {
      throw new EmbeddingError(
        `embedding binds ${embedding.count} splats, file has ${splats.count}`,
      );
    }
    if (embedding.nCageVertices !== cage.vertexCount) {
      throw new EmbeddingError(
        `embedding expects ${embedding.nCageVertices} cage vertices, mesh has ${cage.vertexCount}`,
      );
    }
    return new ClientScene(splats, cage, embedding, msg.objects.slice());
  }

  // Returns true when the frame advanced the display; stale frames (id not
  // beyond the last accepted one) are dropped without touching state.
  applyFrame(msg: FrameMsg): boolean {
    if (msg.frameId <= this.lastFrameId) {
      return false;
    }
    this.transforms = applyFrame(
      this.embedding,
      this.cage,
      msg.positions,
      this.transforms,
    );
    this.lastFrameId = msg.frameId;
    return true;
  }
}
