/**
 * Browser implementation of the View: a canvas overlay on top of the camera
 * frame plus plain DOM panels.  Pure presentation — numbers arrive already
 * formatted.
 */

import type { AlertRow, CameraInfo, QuadViolation, TrendRow } from "./api.js";
import type { Point } from "./draft.js";
import { EDGE_NAMES, ProbeDisplay, View, formatEdge } from "./view.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

export class DomView implements View {
  private readonly frame = byId<HTMLImageElement>("frame");
  private readonly canvas = byId<HTMLCanvasElement>("overlay");
  private readonly edges = byId<HTMLUListElement>("edges");
  private readonly cameraList = byId<HTMLUListElement>("cameras");
  private readonly alertsBody = byId<HTMLTableSectionElement>("alerts-body");
  private readonly trendsBody = byId<HTMLTableSectionElement>("trends-body");
  private readonly hint = byId<HTMLDivElement>("hint");
  private readonly banner = byId<HTMLDivElement>("banner");
  private readonly toast = byId<HTMLDivElement>("toast");
  private readonly computeButton = byId<HTMLButtonElement>("compute");
  private readonly saveButton = byId<HTMLButtonElement>("save");

  private quadPoints: Point[] = [];
  private quadLabels: readonly string[] = [];
  private badIndices = new Set<number>();
  private probe: ProbeDisplay = { points: [], text: null, badIndex: null };
  private toastTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly onCameraPicked: (cameraId: string) => void) {}

  renderQuad(points: Point[], labels: readonly string[]): void {
    this.quadPoints = points;
    this.quadLabels = labels;
    this.redraw();
  }

  renderViolations(violations: QuadViolation[]): void {
    this.badIndices = new Set(violations.flatMap((v) => v.indices));
    const messages = violations.map((v) => `${v.kind}: ${v.message}`);
    this.hint.textContent = messages.join(" — ") || this.hint.textContent;
    if (messages.length > 0) this.hint.classList.add("error");
    else this.hint.classList.remove("error");
    this.redraw();
  }

  renderProbe(display: ProbeDisplay): void {
    this.probe = display;
    this.redraw();
  }

  renderEdges(lengthsCm: number[] | null, errorsPct: number[] | null): void {
    this.edges.replaceChildren();
    if (!lengthsCm || !errorsPct) return;
    EDGE_NAMES.forEach((name, i) => {
      const item = document.createElement("li");
      item.textContent = formatEdge(name, lengthsCm[i] ?? NaN, errorsPct[i] ?? NaN);
      this.edges.appendChild(item);
    });
  }

  renderCameras(cameras: CameraInfo[], selected: string | null): void {
    this.cameraList.replaceChildren();
    for (const cam of cameras) {
      const item = document.createElement("li");
      const button = document.createElement("button");
      button.textContent = `${cam.camera_id}${cam.has_calibration ? " ✓" : ""}`;
      button.classList.toggle("selected", cam.camera_id === selected);
      button.addEventListener("click", () => this.onCameraPicked(cam.camera_id));
      item.appendChild(button);
      this.cameraList.appendChild(item);
    }
  }

  renderAlerts(rows: AlertRow[]): void {
    this.alertsBody.replaceChildren();
    for (const row of rows) {
      const tr = document.createElement("tr");
      const distance = row.min_distance_cm == null ? "-" : `${row.min_distance_cm.toFixed(1)}`;
      for (const text of [row.id, row.kind, row.camera_id, String(row.started_ts_ms), distance]) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      this.alertsBody.appendChild(tr);
    }
  }

  renderTrends(rows: TrendRow[]): void {
    this.trendsBody.replaceChildren();
    for (const row of rows) {
      const tr = document.createElement("tr");
      for (const text of [new Date(row.bucket_start_ts).toISOString(), String(row.count)]) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      this.trendsBody.appendChild(tr);
    }
  }

  renderHint(hint: string | null): void {
    this.hint.classList.remove("error");
    this.hint.textContent = hint ?? "";
  }

  renderBanner(message: string | null): void {
    this.banner.textContent = message ?? "";
    this.banner.style.display = message ? "block" : "none";
  }

  renderToast(message: string): void {
    this.toast.textContent = message;
    this.toast.style.display = "block";
    if (this.toastTimer) clearTimeout(this.toastTimer);
    this.toastTimer = setTimeout(() => {
      this.toast.style.display = "none";
    }, 4000);
  }

  setComputeEnabled(enabled: boolean): void {
    this.computeButton.disabled = !enabled;
  }

  setSaveEnabled(enabled: boolean): void {
    this.saveButton.disabled = !enabled;
  }

  showFrame(url: string | null): void {
    if (url) {
      this.frame.src = url;
    } else {
      this.frame.removeAttribute("src");
    }
  }

  /** Map a mouse event on the overlay to image-pixel coordinates. */
  clickToImagePoint(event: MouseEvent): Point {
    const rect = this.canvas.getBoundingClientRect();
    const scaleX = this.canvas.width / rect.width;
    const scaleY = this.canvas.height / rect.height;
    return {
      x: (event.clientX - rect.left) * scaleX,
      y: (event.clientY - rect.top) * scaleY,
    };
  }

  /** Resize the overlay to the frame's natural size once it loads. */
  fitOverlayToFrame(): { width: number; height: number } {
    this.canvas.width = this.frame.naturalWidth || this.canvas.width;
    this.canvas.height = this.frame.naturalHeight || this.canvas.height;
    this.redraw();
    return { width: this.canvas.width, height: this.canvas.height };
  }

  private redraw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);

    if (this.quadPoints.length === 4) {
      ctx.beginPath();
      ctx.moveTo(this.quadPoints[0]!.x, this.quadPoints[0]!.y);
      for (const p of this.quadPoints.slice(1)) ctx.lineTo(p.x, p.y);
      ctx.closePath();
      ctx.strokeStyle = "#4ea3ff";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    this.quadPoints.forEach((p, i) => {
      const bad = this.badIndices.has(i);
      ctx.beginPath();
      ctx.arc(p.x, p.y, 6, 0, 2 * Math.PI);
      ctx.fillStyle = bad ? "#ff4d4d" : "#4ea3ff";
      ctx.fill();
      ctx.font = "14px sans-serif";
      ctx.fillStyle = bad ? "#ff4d4d" : "#ffffff";
      ctx.fillText(this.quadLabels[i] ?? "", p.x + 9, p.y - 9);
    });

    const probe = this.probe;
    if (probe.points.length === 2) {
      const [a, b] = probe.points as [Point, Point];
      ctx.beginPath();
      ctx.moveTo(a.x, a.y);
      ctx.lineTo(b.x, b.y);
      ctx.strokeStyle = "#ffd166";
      ctx.lineWidth = 2;
      ctx.stroke();
      if (probe.text) {
        ctx.font = "16px sans-serif";
        ctx.fillStyle = probe.badIndex == null ? "#ffd166" : "#ff4d4d";
        ctx.fillText(probe.text, (a.x + b.x) / 2 + 8, (a.y + b.y) / 2 - 8);
      }
    }
    probe.points.forEach((p, i) => {
      ctx.beginPath();
      ctx.arc(p.x, p.y, 5, 0, 2 * Math.PI);
      ctx.fillStyle = probe.badIndex === i ? "#ff4d4d" : "#ffd166";
      ctx.fill();
    });
  }
}
