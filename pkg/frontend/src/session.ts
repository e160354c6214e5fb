/** Client-side session state: the scribble buffer, the one-frame-per-round
 * guard, single-flight submission, overlay versions and the metric curve
 * cache. Never mutates prediction data; only composites what the server
 * returns. */

import { ApiError, Polyline, RoundCurvePoint, ServiceClient } from "./api.js";
import { snapToPixel } from "./coords.js";
import { Point } from "./scribble.js";

export interface BufferedScribble {
  frame: number;
  category: number;
  points: Point[]; // image space, sub-pixel
}

export type SubmitOutcome =
  | { kind: "ok"; round: number; version: number; inferenceMs: number }
  | { kind: "rejected"; message: string }
  | { kind: "error"; status: number; message: string };

export class UiSession {
  currentFrame = 0;
  selectedCategory = 1;
  overlayOpacity = 0.5;
  latestVersion = 0;
  metricsCurve: RoundCurvePoint[] = [];
  private buffer: BufferedScribble[] = [];
  private inFlight = false;

  constructor(
    private client: ServiceClient,
    public readonly sessionId: string,
    public readonly frameCount: number,
    public readonly categories: number[],
  ) {}

  get bufferedScribbles(): readonly BufferedScribble[] {
    return this.buffer;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  setFrame(frame: number): void {
    if (frame < 0 || frame >= this.frameCount) {
      throw new RangeError(`frame ${frame} outside [0, ${this.frameCount})`);
    }
    this.currentFrame = frame;
  }

  addScribble(points: Point[]): void {
    if (points.length < 2) return; // single-point strokes are discarded
    this.buffer.push({
      frame: this.currentFrame,
      category: this.selectedCategory,
      points,
    });
  }

  clearBuffer(): void {
    this.buffer = [];
  }

  /** The benchmark protocol allows one annotated frame per round; a mixed
   * buffer blocks submission instead of being split silently. */
  bufferFrameConflict(): boolean {
    const frames = new Set(this.buffer.map((s) => s.frame));
    return frames.size > 1;
  }

  /** Submit the buffered scribbles as one round. Input stays disabled while
   * the round is in flight; on a server rejection (409/422) the buffer is
   * preserved so the user can retry or adjust. */
  async submitRound(): Promise<SubmitOutcome> {
    if (this.inFlight) {
      return { kind: "rejected", message: "a round is already executing" };
    }
    if (this.buffer.length === 0) {
      return { kind: "rejected", message: "draw at least one scribble" };
    }
    if (this.bufferFrameConflict()) {
      return {
        kind: "rejected",
        message: "scribbles span multiple frames; the protocol allows one frame per round",
      };
    }
    const frame = this.buffer[0].frame;
    const polylines: Polyline[] = this.buffer.map((s) => ({
      category: s.category,
      points: s.points.map((p) => {
        const q = snapToPixel(p);
        return [q.x, q.y] as [number, number];
      }),
    }));
    this.inFlight = true;
    try {
      const resp = await this.client.submitScribbles(
        this.sessionId,
        frame,
        polylines,
      );
      this.latestVersion = resp.prediction_version;
      this.buffer = [];
      await this.refreshMetrics();
      return {
        kind: "ok",
        round: resp.round,
        version: resp.prediction_version,
        inferenceMs: resp.inference_ms,
      };
    } catch (err) {
      if (err instanceof ApiError) {
        return { kind: "error", status: err.status, message: err.message };
      }
      throw err;
    } finally {
      this.inFlight = false;
    }
  }

  async refreshMetrics(): Promise<void> {
    const curve = await this.client.metrics(this.sessionId);
    if (curve) this.metricsCurve = curve;
  }

  async fetchOverlay(frame: number, etag?: string) {
    return this.client.fetchPrediction(
      this.sessionId,
      frame,
      this.latestVersion,
      etag,
    );
  }
}

export async function openSession(
  client: ServiceClient,
  datasetId: string,
  backend = "gnn",
): Promise<UiSession> {
  const info = await client.createSession(datasetId, backend);
  return new UiSession(client, info.session_id, info.frame_count, info.categories);
}
