"""Detection stream ingestion plus cheap pixel-level scene statistics.

Detector output reaches this package as JSON Lines, one frame per line:

    {"camera_id": "cam1", "frame": 17, "ts_ms": 1700, "width": 1280,
     "height": 720, "detections": [{"x_min": 10, "y_min": 20, "width": 80,
     "height": 200, "confidence": 0.93, "class": "person", "track_id": 4}]}

`track_id` and `mask_score` are optional, unknown fields are ignored, and
malformed lines are skipped and counted rather than aborting a replay.
"""

from __future__ import annotations

import json
import socket
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

CLASSES = ("person", "face")


class IngestError(Exception):
    pass


class ParseError(IngestError):
    """One line of detector output could not be understood."""


class EmptyStream(IngestError):
    """A replay source yielded zero valid records."""


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; x grows right, y grows down."""

    x_min: float
    y_min: float
    width: float
    height: float

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    confidence: float
    cls: str
    track_id: int | None = None
    mask_score: float | None = None


@dataclass(frozen=True)
class FrameMeta:
    camera_id: str
    frame_index: int
    ts_ms: int
    width: int
    height: int


@dataclass(frozen=True)
class DetectionRecord:
    meta: FrameMeta
    detections: tuple[Detection, ...]


@dataclass
class IngestCounters:
    """Running tallies a replay accumulates; shared across parse calls."""

    frames: int = 0
    detections: int = 0
    clamped_boxes: int = 0
    dropped_boxes: int = 0
    skipped_lines: int = 0


def _require(obj: dict, key: str, line_no: int | None = None):
    if key not in obj:
        where = f" on line {line_no}" if line_no is not None else ""
        raise ParseError(f"missing required field '{key}'{where}")
    return obj[key]


def _clamp_box(
    box: BoundingBox, width: float, height: float
) -> tuple[BoundingBox | None, bool]:
    """Clip a box to the frame; returns (box or None if nothing is left, clamped?)."""
    x0 = max(0.0, box.x_min)
    y0 = max(0.0, box.y_min)
    x1 = min(float(width), box.x_max)
    y1 = min(float(height), box.y_max)
    clamped = (x0, y0, x1, y1) != (box.x_min, box.y_min, box.x_max, box.y_max)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        return None, True
    return BoundingBox(x0, y0, x1 - x0, y1 - y0), clamped


def parse_detection_line(
    line: str, counters: IngestCounters | None = None, line_no: int | None = None
) -> DetectionRecord:
    """Parse one JSONL line into a DetectionRecord.

    Out-of-frame boxes are clamped to the frame bounds (counted); boxes that
    clamp away entirely are dropped (also counted).  Structural problems
    raise ParseError.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object")

    width = int(_require(obj, "width", line_no))
    height = int(_require(obj, "height", line_no))
    if width < 1 or height < 1:
        raise ParseError(f"frame dimensions must be positive, got {width}x{height}")
    meta = FrameMeta(
        camera_id=str(_require(obj, "camera_id", line_no)),
        frame_index=int(_require(obj, "frame", line_no)),
        ts_ms=int(_require(obj, "ts_ms", line_no)),
        width=width,
        height=height,
    )

    raw_dets = _require(obj, "detections", line_no)
    if not isinstance(raw_dets, list):
        raise ParseError("'detections' must be a list")
    detections: list[Detection] = []
    for det in raw_dets:
        if not isinstance(det, dict):
            raise ParseError("each detection must be a JSON object")
        w = float(_require(det, "width", line_no))
        h = float(_require(det, "height", line_no))
        if w <= 0 or h <= 0:
            raise ParseError(f"detection has non-positive size {w}x{h}")
        conf = float(_require(det, "confidence", line_no))
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"confidence {conf} outside [0, 1]")
        cls = _require(det, "class", line_no)
        if cls not in CLASSES:
            raise ParseError(f"unknown class '{cls}'")
        track_id = det.get("track_id")
        if track_id is not None:
            track_id = int(track_id)
        mask_score = det.get("mask_score")
        if mask_score is not None:
            mask_score = float(mask_score)
            if not 0.0 <= mask_score <= 1.0:
                raise ParseError(f"mask_score {mask_score} outside [0, 1]")
        box = BoundingBox(
            float(_require(det, "x_min", line_no)), float(_require(det, "y_min", line_no)), w, h
        )
        clipped, was_clamped = _clamp_box(box, width, height)
        if clipped is None:
            if counters:
                counters.dropped_boxes += 1
            continue
        if was_clamped and counters:
            counters.clamped_boxes += 1
        detections.append(Detection(clipped, conf, cls, track_id, mask_score))

    if counters:
        counters.frames += 1
        counters.detections += len(detections)
    return DetectionRecord(meta, tuple(detections))


def serialize_detection_record(rec: DetectionRecord) -> str:
    """One JSON line in the wire schema; parse(serialize(x)) is a fixed point."""
    dets = []
    for d in rec.detections:
        obj = {
            "x_min": d.box.x_min,
            "y_min": d.box.y_min,
            "width": d.box.width,
            "height": d.box.height,
            "confidence": d.confidence,
            "class": d.cls,
        }
        if d.track_id is not None:
            obj["track_id"] = d.track_id
        if d.mask_score is not None:
            obj["mask_score"] = d.mask_score
        dets.append(obj)
    return json.dumps(
        {
            "camera_id": rec.meta.camera_id,
            "frame": rec.meta.frame_index,
            "ts_ms": rec.meta.ts_ms,
            "width": rec.meta.width,
            "height": rec.meta.height,
            "detections": dets,
        },
        separators=(",", ":"),
    )


def _line_stream(source: str | Path | IO[str]) -> Iterator[str]:
    """Lines from a path, '-' for stdin, 'tcp://host:port', or an open file."""
    if hasattr(source, "read"):
        yield from source  # type: ignore[misc]
        return
    text = str(source)
    if text == "-":
        yield from sys.stdin
        return
    if text.startswith("tcp://"):
        host, _, port = text[6:].partition(":")
        with socket.create_connection((host, int(port))) as sock:
            with sock.makefile("r", encoding="utf-8") as fh:
                yield from fh
        return
    with open(text, "r", encoding="utf-8") as fh:
        yield from fh


def replay(
    source: str | Path | IO[str],
    speed: float = 0.0,
    counters: IngestCounters | None = None,
) -> Iterator[DetectionRecord]:
    """Yield records from a JSONL source in file order.

    speed 0 streams as fast as possible; a positive speed sleeps between
    records to honor their ts_ms gaps (2.0 plays back at twice real time).
    Malformed lines are counted and skipped; a source with no valid record
    at all raises EmptyStream.
    """
    counters = counters if counters is not None else IngestCounters()
    yielded = 0
    last_ts: int | None = None
    for line_no, line in enumerate(_line_stream(source), start=1):
        if not line.strip():
            continue
        try:
            rec = parse_detection_line(line, counters, line_no)
        except ParseError:
            counters.skipped_lines += 1
            continue
        if speed > 0 and last_ts is not None:
            gap_ms = rec.meta.ts_ms - last_ts
            if gap_ms > 0:
                time.sleep(gap_ms / 1000.0 / speed)
        last_ts = rec.meta.ts_ms
        yielded += 1
        yield rec
    if yielded == 0:
        raise EmptyStream(f"no valid detection records in {source!r}")


# ---------------------------------------------------------------------------
# Grayscale frames and running-average background subtraction.


@dataclass(frozen=True)
class GrayFrame:
    width: int
    height: int
    pixels: np.ndarray  # uint8, shape (height, width)


@dataclass(frozen=True)
class BackgroundModel:
    mean: np.ndarray  # float64, same shape as the frames
    frames_seen: int


@dataclass(frozen=True)
class SceneConfig:
    alpha: float = 0.05
    diff_threshold: float = 25.0
    motion_fraction_threshold: float = 0.002
    low_light_threshold: float = 60.0


@dataclass(frozen=True)
class MotionResult:
    motion_fraction: float
    has_motion: bool
    light_category: str
    mean_level: float


def update_background(
    model: BackgroundModel | None, frame: GrayFrame, alpha: float = 0.05
) -> BackgroundModel:
    """Blend the frame into the running mean; the first frame seeds it."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    pixels = frame.pixels.astype(np.float64)
    if model is None:
        return BackgroundModel(pixels, 1)
    if model.mean.shape != pixels.shape:
        raise ValueError(
            f"frame shape {pixels.shape} does not match model shape {model.mean.shape}"
        )
    mean = (1.0 - alpha) * model.mean + alpha * pixels
    return BackgroundModel(mean, model.frames_seen + 1)


def motion_fraction(
    model: BackgroundModel, frame: GrayFrame, diff_threshold: float = 25.0
) -> float:
    """Fraction of pixels whose absolute deviation from the mean exceeds threshold."""
    diff = np.abs(frame.pixels.astype(np.float64) - model.mean)
    return float(np.count_nonzero(diff > diff_threshold)) / diff.size


def has_motion(fraction: float, threshold: float = 0.002) -> bool:
    return fraction > threshold


def light_category(frame: GrayFrame, threshold: float = 60.0) -> str:
    """'low' below the mean-level threshold, 'normal' otherwise (ties normal)."""
    return "low" if float(frame.pixels.mean()) < threshold else "normal"


def step_scene(
    model: BackgroundModel | None, frame: GrayFrame, cfg: SceneConfig = SceneConfig()
) -> tuple[BackgroundModel, MotionResult]:
    """One frame of the motion filter: stats against the current model, then update."""
    if model is None:
        fraction = 0.0
    else:
        fraction = motion_fraction(model, frame, cfg.diff_threshold)
    result = MotionResult(
        motion_fraction=fraction,
        has_motion=has_motion(fraction, cfg.motion_fraction_threshold),
        light_category=light_category(frame, cfg.low_light_threshold),
        mean_level=float(frame.pixels.mean()),
    )
    return update_background(model, frame, cfg.alpha), result


# ---------------------------------------------------------------------------
# Binary PGM (P5) input, the exchange format for grayscale frames.


def read_pgm(path: str | Path) -> GrayFrame:
    """Read a binary (P5) PGM with maxval up to 255."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        if data[i : i + 1].isspace():
            i += 1
            continue
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        tokens.append(data[start:i])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval > 255 or maxval < 1:
        raise ParseError(f"{path}: unsupported maxval {maxval}")
    i += 1  # single whitespace byte after maxval
    payload = data[i : i + width * height]
    if len(payload) != width * height:
        raise ParseError(f"{path}: truncated pixel data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayFrame(width, height, pixels.copy())


def write_pgm(frame: GrayFrame, path: str | Path) -> None:
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.pixels.astype(np.uint8).tobytes())


def read_pgm_sequence(paths: Iterable[str | Path]) -> Iterator[GrayFrame]:
    for p in paths:
        yield read_pgm(p)
