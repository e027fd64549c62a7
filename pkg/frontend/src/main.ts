/**
 * Entry point: wire the DOM view, the API client, and the app together.
 * The backend origin defaults to the monitoring engine's default bind and
 * can be overridden with ?api=http://host:port.
 */

import { CalibApi } from "./api.js";
import { ConsoleApp } from "./app.js";
import { DomView } from "./dom.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8765";

const api = new CalibApi(baseUrl);
const view = new DomView((cameraId) => {
  (document.getElementById("camera-id") as HTMLInputElement).value = cameraId;
  app.selectCamera(cameraId);
});
const app = new ConsoleApp(api, view);

const frame = document.getElementById("frame") as HTMLImageElement;
const overlay = document.getElementById("overlay") as HTMLCanvasElement;
const cameraInput = document.getElementById("camera-id") as HTMLInputElement;
const widthInput = document.getElementById("world-width") as HTMLInputElement;
const heightInput = document.getElementById("world-height") as HTMLInputElement;

frame.addEventListener("load", () => {
  const size = view.fitOverlayToFrame();
  app.setImageSize(size.width, size.height);
});

overlay.addEventListener("click", (event) => {
  app.handleCanvasClick(view.clickToImagePoint(event));
});

cameraInput.addEventListener("change", () => app.selectCamera(cameraInput.value.trim()));

const pushWorldRect = () => {
  app.setWorldRect(Number(widthInput.value) || 0, Number(heightInput.value) || 0);
};
widthInput.addEventListener("input", pushWorldRect);
heightInput.addEventListener("input", pushWorldRect);

document.getElementById("compute")!.addEventListener("click", () => void app.compute());
document.getElementById("save")!.addEventListener("click", () => void app.save());
document.getElementById("refresh-alerts")!.addEventListener("click", () => {
  void app.refreshAlerts(cameraInput.value.trim() ? { camera_id: cameraInput.value.trim() } : {});
});

for (const radio of document.querySelectorAll<HTMLInputElement>("input[name=mode]")) {
  radio.addEventListener("change", () => {
    if (radio.checked) app.setMode(radio.value === "probe" ? "probe" : "corners");
  });
}

void app.refreshCameras();
