import { beforeEach, describe, expect, it } from "vitest";

import { ApiError, DegeneratePoint, QuadRejected } from "../src/api.js";
import { ConsoleApp } from "../src/app.js";
import { FakeApi, answer, failWith, gate } from "./fake_api.js";
import { FakeView } from "./fake_view.js";

const FIT = {
  homography: [
    [0.9, 0.01, -50],
    [0.02, 1.1, -80],
    [0.0001, 0.0002, 1],
  ],
  edge_lengths_cm: [500.0041, 399.9987, 500.0102, 400.0009],
  edge_errors_pct: [0.00082, 0.000325, 0.00204, 0.000225],
};

const flush = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

let api: FakeApi;
let view: FakeView;
let app: ConsoleApp;

beforeEach(() => {
  api = new FakeApi();
  view = new FakeView();
  app = new ConsoleApp(api, view);
  app.selectCamera("lobby");
  app.setWorldRect(500, 400);
  for (const p of [
    { x: 100, y: 100 },
    { x: 500, y: 100 },
    { x: 500, y: 400 },
    { x: 100, y: 400 },
  ]) {
    app.handleCanvasClick(p);
  }
});

describe("compute", () => {
  it("renders exactly the numbers the server sent, nothing recomputed", async () => {
    api.computeAnswers.push(answer(FIT));
    await app.compute();
    expect(view.edgeLengths).toEqual(FIT.edge_lengths_cm);
    expect(view.edgeErrors).toEqual(FIT.edge_errors_pct);
    expect(app.draft.result?.homography).toEqual(FIT.homography);
    expect(view.saveEnabled).toBe(true);
    expect(view.banner).toBeNull();
  });

  it("sends the clicked points verbatim with dims and image size", async () => {
    app.setImageSize(1920, 1080);
    api.computeAnswers.push(answer(FIT));
    await app.compute();
    expect(api.computeRequests[0]).toEqual({
      image_points: [
        [100, 100],
        [500, 100],
        [500, 400],
        [100, 400],
      ],
      world_rect_cm: [500, 400],
      image_size: [1920, 1080],
    });
  });

  it("highlights the server-named violations and keeps the draft intact", async () => {
    const violations = [{ kind: "collinear", indices: [0, 1, 2], message: "three in a line" }];
    api.computeAnswers.push(failWith(new QuadRejected(violations)));
    const before = app.draft;
    await app.compute();
    expect(view.violations).toEqual(violations);
    expect(app.draft).toEqual(before);
    expect(view.saveEnabled).toBe(false);
  });

  it("shows a banner on network failure and preserves the draft", async () => {
    api.computeAnswers.push(failWith(new TypeError("fetch failed")));
    const before = app.draft;
    await app.compute();
    expect(view.banner).toContain("fetch failed");
    expect(app.draft).toEqual(before);
  });

  it("adjusting a corner after a rejection clears the highlights", async () => {
    api.computeAnswers.push(
      failWith(new QuadRejected([{ kind: "collinear", indices: [0, 1, 2], message: "m" }])),
    );
    await app.compute();
    expect(view.violations).toHaveLength(1);
    app.handleCanvasClick({ x: 104, y: 104 });
    expect(view.violations).toHaveLength(0);
  });

  it("does not fire with fewer than four corners", async () => {
    const fresh = new ConsoleApp(api, view);
    fresh.selectCamera("lobby");
    fresh.setWorldRect(500, 400);
    fresh.handleCanvasClick({ x: 1, y: 1 });
    await fresh.compute();
    expect(api.computeRequests).toHaveLength(0);
  });
});

describe("probe", () => {
  it("renders the stubbed distance formatted to hundredths", async () => {
    api.measureAnswers.push(answer(30.0));
    app.setMode("probe");
    app.handleCanvasClick({ x: 390, y: 300 });
    expect(view.probe.points).toHaveLength(1);
    expect(view.probe.text).toBeNull();
    app.handleCanvasClick({ x: 420, y: 300 });
    await flush();
    expect(view.probe.text).toBe("30.00 cm");
    expect(view.probe.points).toEqual([
      { x: 390, y: 300 },
      { x: 420, y: 300 },
    ]);
  });

  it("identical points read 0.00 cm when the server says zero", async () => {
    api.measureAnswers.push(answer(0.0));
    app.setMode("probe");
    app.handleCanvasClick({ x: 390, y: 300 });
    app.handleCanvasClick({ x: 390, y: 300 });
    await flush();
    expect(view.probe.text).toBe("0.00 cm");
  });

  it("probes through the computed homography when one exists, else the camera id", async () => {
    api.computeAnswers.push(answer(FIT));
    await app.compute();
    api.measureAnswers.push(answer(12.3));
    app.setMode("probe");
    app.handleCanvasClick({ x: 1, y: 1 });
    app.handleCanvasClick({ x: 2, y: 2 });
    await flush();
    expect(api.measureRequests[0]).toEqual({
      point_a: [1, 1],
      point_b: [2, 2],
      homography: FIT.homography,
    });

    app.selectCamera("lobby"); // fresh draft: no computed fit
    api.measureAnswers.push(answer(45.6));
    app.setMode("probe");
    app.handleCanvasClick({ x: 3, y: 3 });
    app.handleCanvasClick({ x: 4, y: 4 });
    await flush();
    expect(api.measureRequests[1]).toEqual({
      point_a: [3, 3],
      point_b: [4, 4],
      camera_id: "lobby",
    });
  });

  it("marks the offending point when the server calls it degenerate", async () => {
    api.measureAnswers.push(failWith(new DegeneratePoint("b", "horizon")));
    app.setMode("probe");
    app.handleCanvasClick({ x: 1, y: 1 });
    app.handleCanvasClick({ x: 2, y: 0 });
    await flush();
    expect(view.probe.badIndex).toBe(1);
    expect(view.probe.text).toContain("point B");
  });

  it("renders an unknown-camera failure inline at the probe", async () => {
    api.measureAnswers.push(
      failWith(new ApiError(400, { error: "unknown_camera", camera_id: "lobby" })),
    );
    app.setMode("probe");
    app.handleCanvasClick({ x: 1, y: 1 });
    app.handleCanvasClick({ x: 2, y: 2 });
    await flush();
    expect(view.probe.text).toContain("unknown_camera");
  });

  it("a third click starts a new pair", async () => {
    api.measureAnswers.push(answer(10.0), answer(20.0));
    app.setMode("probe");
    app.handleCanvasClick({ x: 1, y: 1 });
    app.handleCanvasClick({ x: 2, y: 2 });
    await flush();
    app.handleCanvasClick({ x: 5, y: 5 });
    expect(view.probe.points).toEqual([{ x: 5, y: 5 }]);
    expect(view.probe.text).toBeNull();
  });
});

describe("save", () => {
  it("saves, toasts, and refreshes the camera list to show the calibration", async () => {
    api.computeAnswers.push(answer(FIT));
    await app.compute();
    api.saveAnswers.push(answer(FIT));
    api.cameraAnswers.push(answer([{ camera_id: "lobby", has_calibration: true }]));
    await app.save();
    expect(api.saveRequests[0]?.cameraId).toBe("lobby");
    expect(view.toasts).toEqual(["calibration saved for lobby"]);
    expect(view.cameras).toEqual([{ camera_id: "lobby", has_calibration: true }]);
  });

  it("does nothing before a successful compute", async () => {
    await app.save();
    expect(api.saveRequests).toHaveLength(0);
  });

  it("a failed save keeps the draft and its computed result", async () => {
    api.computeAnswers.push(answer(FIT));
    await app.compute();
    api.saveAnswers.push(failWith(new ApiError(500, { error: "disk full" })));
    const before = app.draft;
    await app.save();
    expect(view.toasts[0]).toContain("save failed");
    expect(app.draft).toEqual(before);
    expect(app.draft.result).not.toBeNull();
  });
});

describe("single in-flight request", () => {
  it("a newer compute supersedes an older one; only the newest renders", async () => {
    const slow = gate<typeof FIT>();
    api.computeAnswers.push(slow.responder);
    const first = app.compute();

    const second = { ...FIT, edge_lengths_cm: [1, 2, 3, 4], edge_errors_pct: [9, 9, 9, 9] };
    api.computeAnswers.push(answer(second));
    await app.compute();
    expect(view.edgeLengths).toEqual([1, 2, 3, 4]);

    slow.release(FIT); // the stale answer arrives late...
    await first;
    expect(view.edgeLengths).toEqual([1, 2, 3, 4]); // ...and is dropped
  });

  it("a probe started during a compute wins", async () => {
    const slow = gate<typeof FIT>();
    api.computeAnswers.push(slow.responder);
    const computing = app.compute();

    api.measureAnswers.push(answer(30.0));
    app.setMode("probe");
    app.handleCanvasClick({ x: 1, y: 1 });
    app.handleCanvasClick({ x: 2, y: 2 });
    await flush();
    expect(view.probe.text).toBe("30.00 cm");

    slow.release(FIT);
    await computing;
    expect(app.draft.result).toBeNull(); // stale compute never landed
  });
});

describe("camera list and alerts panels", () => {
  it("renders cameras and flags the selected one", async () => {
    api.cameraAnswers.push(
      answer([
        { camera_id: "dock", has_calibration: false },
        { camera_id: "lobby", has_calibration: true },
      ]),
    );
    await app.refreshCameras();
    expect(view.cameras.map((c) => c.camera_id)).toEqual(["dock", "lobby"]);
    expect(view.selectedCamera).toBe("lobby");
  });

  it("renders alert and trend rows exactly as sent", async () => {
    const alerts = [
      { id: "a1", kind: "distancing", camera_id: "lobby", started_ts_ms: 5000, min_distance_cm: 142.5 },
    ];
    const trends = [{ bucket_start_ts: 0, count: 3 }];
    api.alertAnswers.push(answer(alerts));
    api.trendAnswers.push(answer(trends));
    await app.refreshAlerts();
    expect(view.alerts).toEqual(alerts);
    expect(view.trends).toEqual(trends);
  });

  it("a cameras failure shows the banner and keeps the old list", async () => {
    api.cameraAnswers.push(answer([{ camera_id: "lobby", has_calibration: false }]));
    await app.refreshCameras();
    api.cameraAnswers.push(failWith(new TypeError("fetch failed")));
    await app.refreshCameras();
    expect(view.banner).toContain("fetch failed");
    expect(app.cameras).toEqual([{ camera_id: "lobby", has_calibration: false }]);
  });
});
