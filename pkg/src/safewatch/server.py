"""HTTP backend for the calibration console and stored-alert queries.

Every geometric number a client sees is computed here, through the same
functions the CLI uses; browser clients only ever post pixel coordinates and
render what comes back, so UI and CLI readouts are bit-identical.

Endpoints (JSON unless noted):

    GET  /api/cameras                         known cameras + calibration state
    GET  /api/frame/{camera_id}               PNG reference frame
    POST /api/calibration/compute             fit a quad, report edge errors
    PUT  /api/calibration/{camera_id}         same, then persist the calibration
    POST /api/measure                         floor distance between two pixels
    GET  /api/alerts?camera_id&kind&from_ts&to_ts
    GET  /api/trends?bucket=hour|day&...

All responses carry permissive CORS headers so a dev-served console on
another port can talk to the service directly.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlsplit

import numpy as np

from .alerting import EventStore
from .distancing import probe_distance
from .geometry import (
    Calibration,
    CalibrationQuad,
    Homography,
    InvalidQuad,
    PixelPoint,
    PointAtInfinity,
    apply_homography,
    build_calibration,
    edge_report,
    load_calibration,
    save_calibration,
)

log = logging.getLogger("safewatch.server")

MAX_BODY_BYTES = 1 << 20
_CAMERA_ID = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]*")


@dataclass
class ServerConfig:
    calibrations_dir: Path
    frames_dir: Path | None = None
    store_dir: Path | None = None


class BadRequest(Exception):
    """Carries the structured JSON body for a 400 response."""

    def __init__(self, payload: dict):
        self.payload = payload
        super().__init__(json.dumps(payload))


def _schema_error(message: str) -> BadRequest:
    return BadRequest(
        {"violations": [{"kind": "bad_request", "indices": [], "message": message}]}
    )


def _pair(obj, what: str) -> tuple[float, float]:
    if not isinstance(obj, (list, tuple)) or len(obj) != 2:
        raise _schema_error(f"{what} must be a [x, y] pair")
    try:
        return float(obj[0]), float(obj[1])
    except (TypeError, ValueError):
        raise _schema_error(f"{what} must contain two numbers") from None


def parse_quad_request(body: dict) -> tuple[tuple[PixelPoint, ...], float, float, int, int]:
    points = body.get("image_points")
    if not isinstance(points, (list, tuple)) or len(points) != 4:
        raise _schema_error("image_points must list exactly 4 [x, y] pairs")
    pixel_points = tuple(PixelPoint(*_pair(p, "image point")) for p in points)
    rect_w, rect_h = _pair(body.get("world_rect_cm"), "world_rect_cm")
    img_w, img_h = _pair(body.get("image_size"), "image_size")
    if img_w != int(img_w) or img_h != int(img_h) or img_w <= 0 or img_h <= 0:
        raise _schema_error("image_size must be two positive integers")
    return pixel_points, rect_w, rect_h, int(img_w), int(img_h)


def compute_calibration(body: dict, camera_id: str = "preview") -> tuple[Calibration, dict]:
    """Shared body of compute and save: fit the quad and describe the result."""
    points, rect_w, rect_h, img_w, img_h = parse_quad_request(body)
    try:
        quad = CalibrationQuad(points, rect_w, rect_h)
        cal = build_calibration(camera_id, img_w, img_h, quad)
    except InvalidQuad as err:
        raise BadRequest({"violations": [v.to_dict() for v in err.violations]}) from None
    lengths, errors = edge_report(cal)
    payload = {
        "homography": cal.homography.m.tolist(),
        "edge_lengths_cm": lengths,
        "edge_errors_pct": errors,
    }
    return cal, payload


class _Api(BaseHTTPRequestHandler):
    server: "ApiServer"

    # -- plumbing ----------------------------------------------------------

    def log_message(self, fmt, *args):  # route request logs to logging, not stderr
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode("utf-8"), "application/json")

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY_BYTES:
            raise _schema_error("request body too large")
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise _schema_error("request body is empty")
        try:
            body = json.loads(raw)
        except json.JSONDecodeError:
            raise _schema_error("request body is not valid JSON") from None
        if not isinstance(body, dict):
            raise _schema_error("request body must be a JSON object")
        return body

    def _route(self, method: str) -> None:
        path = urlsplit(self.path).path.rstrip("/")
        query = parse_qs(urlsplit(self.path).query)
        try:
            handler = self._find_handler(method, path)
            if handler is None:
                self._json(404, {"error": "not_found", "path": path})
                return
            handler(query)
        except BadRequest as err:
            self._json(400, err.payload)
        except Exception:  # noqa: BLE001 - a request must never kill the server
            log.exception("unhandled error for %s %s", method, path)
            self._json(500, {"error": "internal"})

    def _find_handler(self, method: str, path: str):
        if method == "GET" and path == "/api/cameras":
            return self._get_cameras
        if method == "GET" and path.startswith("/api/frame/"):
            return lambda q: self._get_frame(path.removeprefix("/api/frame/"))
        if method == "POST" and path == "/api/calibration/compute":
            return lambda q: self._post_compute()
        if method == "PUT" and path.startswith("/api/calibration/"):
            return lambda q: self._put_calibration(path.removeprefix("/api/calibration/"))
        if method == "POST" and path == "/api/measure":
            return lambda q: self._post_measure()
        if method == "GET" and path == "/api/alerts":
            return self._get_alerts
        if method == "GET" and path == "/api/trends":
            return self._get_trends
        return None

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_PUT(self):
        self._route("PUT")

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    # -- helpers -----------------------------------------------------------

    @property
    def cfg(self) -> ServerConfig:
        return self.server.cfg

    def _camera_id(self, raw: str) -> str:
        if not _CAMERA_ID.fullmatch(raw) or ".." in raw:
            raise _schema_error(f"invalid camera id '{raw}'")
        return raw

    def _calibration_path(self, camera_id: str) -> Path:
        return self.cfg.calibrations_dir / f"{camera_id}.json"

    def _open_store(self) -> EventStore | None:
        if self.cfg.store_dir is None:
            return None
        return EventStore(self.cfg.store_dir)

    @staticmethod
    def _int_param(query: dict, name: str) -> int | None:
        if name not in query:
            return None
        try:
            return int(query[name][0])
        except ValueError:
            raise _schema_error(f"{name} must be an integer") from None

    @staticmethod
    def _str_param(query: dict, name: str) -> str | None:
        return query[name][0] if name in query else None

    # -- endpoints ---------------------------------------------------------

    def _get_cameras(self, query) -> None:
        calibrated = set()
        if self.cfg.calibrations_dir.is_dir():
            calibrated = {p.stem for p in self.cfg.calibrations_dir.glob("*.json")}
        with_frames = set()
        if self.cfg.frames_dir is not None and self.cfg.frames_dir.is_dir():
            with_frames = {p.stem for p in self.cfg.frames_dir.glob("*.png")}
        self._json(
            200,
            [
                {"camera_id": cam, "has_calibration": cam in calibrated}
                for cam in sorted(calibrated | with_frames)
            ],
        )

    def _get_frame(self, raw_id: str) -> None:
        camera_id = self._camera_id(raw_id)
        if self.cfg.frames_dir is None:
            self._json(404, {"error": "no_frames_dir"})
            return
        path = self.cfg.frames_dir / f"{camera_id}.png"
        if not path.is_file():
            self._json(404, {"error": "unknown_camera", "camera_id": camera_id})
            return
        self._send(200, path.read_bytes(), "image/png")

    def _post_compute(self) -> None:
        _, payload = compute_calibration(self._read_body())
        self._json(200, payload)

    def _put_calibration(self, raw_id: str) -> None:
        camera_id = self._camera_id(raw_id)
        cal, payload = compute_calibration(self._read_body(), camera_id)
        self.cfg.calibrations_dir.mkdir(parents=True, exist_ok=True)
        save_calibration(cal, self._calibration_path(camera_id))
        self._json(201, {"camera_id": camera_id, **payload})

    def _measure_homography(self, body: dict) -> Homography:
        if "homography" in body:
            matrix = body["homography"]
            if (
                not isinstance(matrix, (list, tuple))
                or len(matrix) != 3
                or any(not isinstance(row, (list, tuple)) or len(row) != 3 for row in matrix)
            ):
                raise _schema_error("homography must be a 3x3 matrix")
            return Homography.normalized(np.asarray(matrix, dtype=np.float64))
        if "camera_id" in body:
            camera_id = self._camera_id(str(body["camera_id"]))
            path = self._calibration_path(camera_id)
            if not path.is_file():
                raise BadRequest({"error": "unknown_camera", "camera_id": camera_id})
            return load_calibration(path).homography
        raise _schema_error("measure needs either camera_id or homography")

    def _post_measure(self) -> None:
        body = self._read_body()
        hom = self._measure_homography(body)
        point_a = _pair(body.get("point_a"), "point_a")
        point_b = _pair(body.get("point_b"), "point_b")
        try:
            distance = probe_distance(hom, point_a, point_b)
        except PointAtInfinity as err:
            which = "a"
            try:
                apply_homography(hom, point_a)
                which = "b"
            except PointAtInfinity:
                pass
            self._json(
                400,
                {"error": "point_at_infinity", "point": which, "message": str(err)},
            )
            return
        self._json(200, {"distance_cm": round(distance, 2)})

    def _get_alerts(self, query) -> None:
        store = self._open_store()
        if store is None:
            self._json(200, [])
            return
        records = store.query(
            camera_id=self._str_param(query, "camera_id"),
            kind=self._str_param(query, "kind"),
            from_ts=self._int_param(query, "from_ts"),
            to_ts=self._int_param(query, "to_ts"),
        )
        self._json(200, [r.to_dict() for r in records])

    def _get_trends(self, query) -> None:
        bucket = self._str_param(query, "bucket") or "hour"
        store = self._open_store()
        if store is None:
            self._json(200, [])
            return
        try:
            buckets = store.trend(
                bucket,
                camera_id=self._str_param(query, "camera_id"),
                kind=self._str_param(query, "kind"),
                from_ts=self._int_param(query, "from_ts"),
                to_ts=self._int_param(query, "to_ts"),
            )
        except ValueError as err:
            raise _schema_error(str(err)) from None
        self._json(200, [{"bucket_start_ts": ts, "count": n} for ts, n in buckets])


class ApiServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, cfg: ServerConfig):
        super().__init__(address, _Api)
        self.cfg = cfg


def make_server(cfg: ServerConfig, host: str = "127.0.0.1", port: int = 8765) -> ApiServer:
    return ApiServer((host, port), cfg)


def serve(cfg: ServerConfig, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Run until interrupted; binds before printing so failures exit early."""
    server = make_server(cfg, host, port)
    host_shown, port_shown = server.server_address[:2]
    print(f"listening on http://{host_shown}:{port_shown}")
    try:
        server.serve_forever()
    finally:
        server.server_close()
