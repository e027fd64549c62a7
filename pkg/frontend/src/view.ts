/**
 * What the app renders into.  The browser gets a canvas/DOM implementation;
 * tests get a recording fake, so every displayed value can be asserted to
 * equal exactly what the server sent.
 */

import type { AlertRow, CameraInfo, QuadViolation, TrendRow } from "./api.js";
import type { Point } from "./draft.js";

export interface ProbeDisplay {
  points: Point[];
  /** The readout next to the probe line, e.g. "30.00 cm"; null while picking. */
  text: string | null;
  /** Index (0/1) of a point the server called degenerate, if any. */
  badIndex: number | null;
}

export interface View {
  renderQuad(points: Point[], labels: readonly string[]): void;
  renderEdges(lengthsCm: number[] | null, errorsPct: number[] | null): void;
  renderViolations(violations: QuadViolation[]): void;
  renderProbe(display: ProbeDisplay): void;
  renderCameras(cameras: CameraInfo[], selected: string | null): void;
  renderAlerts(rows: AlertRow[]): void;
  renderTrends(rows: TrendRow[]): void;
  renderHint(hint: string | null): void;
  renderBanner(message: string | null): void;
  renderToast(message: string): void;
  setComputeEnabled(enabled: boolean): void;
  setSaveEnabled(enabled: boolean): void;
  showFrame(url: string | null): void;
}

export const EDGE_NAMES = ["top", "right", "bottom", "left"] as const;

/** "top: 500.00 cm (error 0.0000%)" — numbers verbatim from the server. */
export function formatEdge(name: string, lengthCm: number, errorPct: number): string {
  return `${name}: ${lengthCm.toFixed(2)} cm (error ${errorPct.toFixed(4)}%)`;
}

/** "30.00 cm" — the server already rounded to hundredths. */
export function formatDistance(distanceCm: number): string {
  return `${distanceCm.toFixed(2)} cm`;
}

export function describeError(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
