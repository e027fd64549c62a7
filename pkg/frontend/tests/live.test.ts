// End-to-end check against a real running backend.
//
// Skipped unless the environment provides:
//   CALIB_API       base URL of the server, e.g. http://127.0.0.1:18765
//   CALIB_MANIFEST  path to the grid fixture manifest JSON
//   CALIB_CLI_CM    stdout of the command-line `measure` for the same probe
//                   pixel pair (e.g. "30.00"), captured by scripts/live-check.sh
//
// The console itself never computes geometry, so every number asserted here
// reached the view through the HTTP API.
import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";
import { ConsoleApp } from "../src/app.js";
import { CalibApi } from "../src/api.js";
import { FakeView } from "./fake_view.js";

interface Manifest {
  camera_id: string;
  image_size: [number, number];
  world_rect_cm: [number, number];
  tile_cm: number;
  corner_pixels: [number, number][];
  probe_a: { floor_cm: [number, number]; pixel: [number, number] };
  probe_b: { floor_cm: [number, number]; pixel: [number, number] };
}

const baseUrl = process.env.CALIB_API;

async function waitFor(check: () => boolean, timeoutMs = 5000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) throw new Error("timed out waiting for the view to update");
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
}

describe.runIf(!!baseUrl)("calibration console against a live backend", () => {
  // The suite body still runs during collection when skipped, so only touch
  // the filesystem once the gate is actually open.
  const manifest: Manifest = baseUrl
    ? JSON.parse(readFileSync(process.env.CALIB_MANIFEST ?? "", "utf-8"))
    : ({} as Manifest);
  const cliDistance = (process.env.CALIB_CLI_CM ?? "").trim();

  function freshApp(): { app: ConsoleApp; view: FakeView } {
    const view = new FakeView();
    const app = new ConsoleApp(new CalibApi(baseUrl ?? ""), view);
    app.setImageSize(manifest.image_size[0], manifest.image_size[1]);
    return { app, view };
  }

  async function probe(app: ConsoleApp, view: FakeView): Promise<string> {
    app.setMode("probe");
    app.handleCanvasClick({ x: manifest.probe_a.pixel[0], y: manifest.probe_a.pixel[1] });
    app.handleCanvasClick({ x: manifest.probe_b.pixel[0], y: manifest.probe_b.pixel[1] });
    await waitFor(() => view.probe !== null && view.probe.text !== null);
    expect(view.banner).toBeNull();
    return view.probe?.text ?? "";
  }

  it("lists the fixture camera", async () => {
    const { app, view } = freshApp();
    await app.refreshCameras();
    const ids = view.cameras.map((c) => c.camera_id);
    expect(ids).toContain(manifest.camera_id);
  });

  it("fits the exact grid corners with edge errors below 0.01%", async () => {
    const { app, view } = freshApp();
    app.selectCamera(manifest.camera_id);
    app.setWorldRect(manifest.world_rect_cm[0], manifest.world_rect_cm[1]);
    for (const [x, y] of manifest.corner_pixels) {
      app.handleCanvasClick({ x, y });
    }
    await app.compute();

    expect(view.banner).toBeNull();
    expect(view.violations).toEqual([]);
    expect(view.edgeErrors).toHaveLength(4);
    for (const err of view.edgeErrors) {
      expect(err).not.toBeNull();
      expect(Math.abs(err ?? NaN)).toBeLessThan(0.01);
    }
    for (const len of view.edgeLengths) {
      expect(len).not.toBeNull();
    }
  });

  it("probes one tile through the unsaved fit and matches the command line", async () => {
    const { app, view } = freshApp();
    app.selectCamera(manifest.camera_id);
    app.setWorldRect(manifest.world_rect_cm[0], manifest.world_rect_cm[1]);
    for (const [x, y] of manifest.corner_pixels) {
      app.handleCanvasClick({ x, y });
    }
    await app.compute();

    const text = await probe(app, view);
    expect(text).toBe("30.00 cm");
    expect(cliDistance).not.toBe("");
    expect(text).toBe(`${cliDistance} cm`);
  });

  it("saves the calibration and probes again through the stored one", async () => {
    const { app, view } = freshApp();
    app.selectCamera(manifest.camera_id);
    app.setWorldRect(manifest.world_rect_cm[0], manifest.world_rect_cm[1]);
    for (const [x, y] of manifest.corner_pixels) {
      app.handleCanvasClick({ x, y });
    }
    await app.compute();
    await app.save();
    expect(view.toasts.at(-1)).toContain(`calibration saved for ${manifest.camera_id}`);
    const listed = view.cameras.find((c) => c.camera_id === manifest.camera_id);
    expect(listed?.has_calibration).toBe(true);

    // A fresh selection drops the unsaved fit, so this probe resolves through
    // the calibration persisted on the server.
    app.selectCamera(manifest.camera_id);
    const text = await probe(app, view);
    expect(text).toBe("30.00 cm");
  });

  it("serves the reference frame the overlay draws on", async () => {
    const reply = await fetch(`${baseUrl}/api/frame/${manifest.camera_id}`);
    expect(reply.status).toBe(200);
    expect(reply.headers.get("content-type")).toBe("image/png");
    const body = new Uint8Array(await reply.arrayBuffer());
    expect(body.length).toBeGreaterThan(0);
    // PNG signature
    expect(Array.from(body.slice(0, 4))).toEqual([0x89, 0x50, 0x4e, 0x47]);
  });
});
