/**
 * Orchestration between the draft state, the API client, and the view.
 * Holds the only mutable state in the console and enforces the
 * one-request-in-flight rule: a newer compute/measure cancels and replaces
 * an older one, and a stale response never reaches the view.
 */

import {
  Api,
  ApiError,
  CameraInfo,
  ComputeRequest,
  DegeneratePoint,
  MeasureRequest,
  QuadRejected,
} from "./api.js";
import {
  CORNER_LABELS,
  Draft,
  Point,
  canCompute,
  canSave,
  emptyDraft,
  pickPoint,
  setWorldRect,
  withResult,
} from "./draft.js";
import { View, describeError, formatDistance } from "./view.js";

export type Mode = "corners" | "probe";

type Outcome<T> =
  | { kind: "ok"; value: T }
  | { kind: "error"; error: unknown }
  | { kind: "stale" };

export class ConsoleApp {
  draft: Draft = emptyDraft("");
  mode: Mode = "corners";
  probePoints: Point[] = [];
  cameras: CameraInfo[] = [];

  private imageSize: [number, number] = [1280, 720];
  private requestSeq = 0;
  private inflight: AbortController | null = null;

  constructor(private readonly api: Api, private readonly view: View) {}

  /** The frame's natural pixel size, once the browser knows it. */
  setImageSize(width: number, height: number): void {
    this.imageSize = [width, height];
  }

  setMode(mode: Mode): void {
    this.mode = mode;
    if (mode === "corners") {
      this.probePoints = [];
      this.view.renderProbe({ points: [], text: null, badIndex: null });
    }
  }

  selectCamera(cameraId: string): void {
    this.draft = emptyDraft(cameraId);
    this.probePoints = [];
    this.view.showFrame(cameraId ? this.api.frameUrl(cameraId) : null);
    this.view.renderProbe({ points: [], text: null, badIndex: null });
    this.view.renderCameras(this.cameras, cameraId || null);
    this.syncDraftView();
  }

  setWorldRect(widthCm: number, heightCm: number): void {
    this.draft = setWorldRect(this.draft, widthCm, heightCm);
    this.syncDraftView();
  }

  handleCanvasClick(p: Point): void {
    if (this.mode === "corners") {
      this.draft = pickPoint(this.draft, p);
      this.syncDraftView();
    } else {
      void this.probeClick(p);
    }
  }

  async refreshCameras(): Promise<void> {
    try {
      this.cameras = await this.api.cameras();
      this.view.renderCameras(this.cameras, this.draft.cameraId || null);
      this.view.renderBanner(null);
    } catch (err) {
      this.view.renderBanner(describeError(err));
    }
  }

  async refreshAlerts(params: { camera_id?: string; kind?: string } = {}): Promise<void> {
    try {
      this.view.renderAlerts(await this.api.alerts(params));
      this.view.renderTrends(await this.api.trends("hour", params));
      this.view.renderBanner(null);
    } catch (err) {
      this.view.renderBanner(describeError(err));
    }
  }

  async compute(): Promise<void> {
    if (!canCompute(this.draft)) return;
    const body = this.quadRequest();
    const outcome = await this.track((signal) => this.api.compute(body, signal));
    if (outcome.kind === "stale") return;
    if (outcome.kind === "ok") {
      this.draft = withResult(this.draft, {
        homography: outcome.value.homography,
        lengthsCm: outcome.value.edge_lengths_cm,
        errorsPct: outcome.value.edge_errors_pct,
      });
      this.view.renderBanner(null);
      this.syncDraftView();
    } else if (outcome.error instanceof QuadRejected) {
      // Nothing about the draft resets: the highlighted points are the fix.
      this.view.renderViolations(outcome.error.violations);
    } else {
      this.view.renderBanner(describeError(outcome.error));
    }
  }

  async save(): Promise<void> {
    if (!canSave(this.draft)) return;
    const body = this.quadRequest();
    const outcome = await this.track((signal) =>
      this.api.saveCalibration(this.draft.cameraId, body, signal),
    );
    if (outcome.kind === "stale") return;
    if (outcome.kind === "ok") {
      this.view.renderToast(`calibration saved for ${this.draft.cameraId}`);
      await this.refreshCameras();
    } else {
      // The draft survives; the user can retry or adjust.
      this.view.renderToast(`save failed: ${describeError(outcome.error)}`);
    }
  }

  // -- internals -----------------------------------------------------------

  private quadRequest(): ComputeRequest {
    return {
      image_points: this.draft.points.map((p) => [p.x, p.y] as [number, number]),
      world_rect_cm: [this.draft.worldWidthCm, this.draft.worldHeightCm],
      image_size: this.imageSize,
    };
  }

  private async probeClick(p: Point): Promise<void> {
    this.probePoints = this.probePoints.length >= 2 ? [p] : [...this.probePoints, p];
    if (this.probePoints.length < 2) {
      this.view.renderProbe({ points: this.probePoints, text: null, badIndex: null });
      return;
    }
    const [a, b] = this.probePoints as [Point, Point];
    const points = {
      point_a: [a.x, a.y] as [number, number],
      point_b: [b.x, b.y] as [number, number],
    };
    // Probe through the just-computed fit when there is one (what-if mode),
    // otherwise through the camera's saved calibration.
    const request: MeasureRequest = this.draft.result
      ? { ...points, homography: this.draft.result.homography }
      : { ...points, camera_id: this.draft.cameraId };
    const shown = this.probePoints;
    const outcome = await this.track((signal) => this.api.measure(request, signal));
    if (outcome.kind === "stale") return;
    if (outcome.kind === "ok") {
      this.view.renderProbe({ points: shown, text: formatDistance(outcome.value), badIndex: null });
    } else if (outcome.error instanceof DegeneratePoint) {
      this.view.renderProbe({
        points: shown,
        text: `point ${outcome.error.point.toUpperCase()} has no floor position (horizon)`,
        badIndex: outcome.error.point === "a" ? 0 : 1,
      });
    } else if (outcome.error instanceof ApiError) {
      this.view.renderProbe({ points: shown, text: describeError(outcome.error), badIndex: null });
    } else {
      this.view.renderBanner(describeError(outcome.error));
    }
  }

  /**
   * Run one API call under the single-in-flight rule.  Starting a new call
   * aborts the previous one; a response (or failure) belonging to anything
   * but the newest call reports "stale" so callers drop it silently.
   */
  private async track<T>(fn: (signal: AbortSignal) => Promise<T>): Promise<Outcome<T>> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const seq = ++this.requestSeq;
    try {
      const value = await fn(controller.signal);
      return seq === this.requestSeq ? { kind: "ok", value } : { kind: "stale" };
    } catch (error) {
      if (seq !== this.requestSeq || controller.signal.aborted) return { kind: "stale" };
      return { kind: "error", error };
    } finally {
      if (this.inflight === controller) this.inflight = null;
    }
  }

  private syncDraftView(): void {
    this.view.renderQuad(this.draft.points, CORNER_LABELS.slice(0, this.draft.points.length));
    this.view.renderViolations([]);
    this.view.renderHint(this.draft.hint);
    this.view.renderEdges(
      this.draft.result ? this.draft.result.lengthsCm : null,
      this.draft.result ? this.draft.result.errorsPct : null,
    );
    this.view.setComputeEnabled(canCompute(this.draft));
    this.view.setSaveEnabled(canSave(this.draft));
  }
}
