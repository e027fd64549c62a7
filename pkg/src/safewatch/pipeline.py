"""Multi-stream orchestration, synthetic scenes, and the throughput bench.

Three concerns live here because they share the same frame loop:

* ``synth_scene`` manufactures ground-truthed detection streams by forward
  projecting walking agents through a calibration's inverse homography, so
  every downstream measurement can be checked against planted geometry.
* ``run_monitor`` drives the full per-frame pipeline (ingest -> distance ->
  debounce -> emit -> store) over many camera streams, either round-robin in
  one execution context ("sync") or with one producer and one worker thread
  per stream over bounded queues ("async").
* ``bench`` runs both modes over the same input with an injected per-frame
  stage latency standing in for model inference and reports achieved fps
  grouped by detected-person count.
"""

from __future__ import annotations

import math
import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .alerting import (
    Alert,
    DebounceConfig,
    EpisodeSummary,
    EpisodeTracker,
    EventRecord,
    EventStore,
    debounce_step,
    emit,
    mask_alert_step,
)
from .distancing import MonitorConfig, measure_frame
from .geometry import (
    Calibration,
    CalibrationQuad,
    PixelPoint,
    WorldPoint,
    apply_homography,
    build_calibration,
    invert_homography,
)
from .ingest import BoundingBox, Detection, DetectionRecord, FrameMeta, replay

DEFAULT_QUEUE_CAPACITY = 64


class PipelineError(Exception):
    pass


class ConfigError(PipelineError):
    pass


class OutOfFrameAgent(PipelineError):
    """An agent's footprint projected outside the camera frame."""

    def __init__(self, agent_index: int, ts_ms: int, point: PixelPoint):
        self.agent_index = agent_index
        self.ts_ms = ts_ms
        self.point = point
        super().__init__(
            f"agent {agent_index} leaves the frame at t={ts_ms} ms "
            f"(foot pixel {point.x:.1f},{point.y:.1f})"
        )


# ---------------------------------------------------------------------------
# Synthetic scenes.


@dataclass(frozen=True)
class SyntheticAgent:
    """A person walking the floor plane along timestamped waypoints.

    Positions are in the calibration's floor frame (cm).  Between waypoints
    the agent moves in a straight line at constant speed; before the first
    and after the last waypoint it stands still.
    """

    track_id: int
    waypoints: tuple[tuple[WorldPoint, int], ...]
    height_cm: float = 170.0
    width_cm: float = 50.0

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("an agent needs at least one waypoint")
        times = [ts for _, ts in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint timestamps must be strictly increasing")
        if self.height_cm <= 0 or self.width_cm <= 0:
            raise ValueError("agent height and width must be positive")

    def position_at(self, ts_ms: int) -> WorldPoint:
        pts = self.waypoints
        if ts_ms <= pts[0][1]:
            return pts[0][0]
        if ts_ms >= pts[-1][1]:
            return pts[-1][0]
        for (p0, t0), (p1, t1) in zip(pts, pts[1:]):
            if t0 <= ts_ms <= t1:
                frac = (ts_ms - t0) / (t1 - t0)
                return WorldPoint(p0.x + frac * (p1.x - p0.x), p0.y + frac * (p1.y - p0.y))
        raise AssertionError("unreachable: waypoints cover the clamped range")


def agent_ground_segment(agent: SyntheticAgent, ts_ms: int) -> tuple[WorldPoint, WorldPoint]:
    """The agent's feet span on the floor: position +/- width/2 along x."""
    p = agent.position_at(ts_ms)
    half = agent.width_cm / 2.0
    return (WorldPoint(p.x - half, p.y), WorldPoint(p.x + half, p.y))


def _in_frame(pt: PixelPoint, width: int, height: int) -> bool:
    return 0.0 <= pt.x <= width and 0.0 <= pt.y <= height


def synth_scene(
    agents: Sequence[SyntheticAgent],
    cal: Calibration,
    fps: float,
    duration_s: float,
    confidence: float = 0.9,
) -> list[DetectionRecord]:
    """Forward-project agents into detection records, one per frame.

    Each agent's two foot points map to image pixels through the inverse of
    the calibration homography; the box's bottom edge spans those pixels.
    Apparent height is the agent's height scaled by the local pixel-per-cm
    ratio at the footprint, measured by projecting a 1 cm probe; a head that
    pokes above the frame is clipped (the bottom edge, which carries all the
    geometry, must stay inside the frame or OutOfFrameAgent is raised).
    """
    if fps <= 0 or duration_s <= 0:
        raise ValueError("fps and duration must be positive")
    floor_to_image = invert_homography(cal.homography)
    n_frames = max(1, round(fps * duration_s))
    records = []
    for frame in range(n_frames):
        ts_ms = round(frame * 1000.0 / fps)
        detections = []
        for idx, agent in enumerate(agents):
            left_w, right_w = agent_ground_segment(agent, ts_ms)
            left = PixelPoint(*apply_homography(floor_to_image, left_w))
            right = PixelPoint(*apply_homography(floor_to_image, right_w))
            for pt in (left, right):
                if not _in_frame(pt, cal.image_width, cal.image_height):
                    raise OutOfFrameAgent(idx, ts_ms, pt)
            x_min, x_max = min(left.x, right.x), max(left.x, right.x)
            y_bottom = max(left.y, right.y)
            center = agent.position_at(ts_ms)
            base = apply_homography(floor_to_image, center)
            probe = apply_homography(floor_to_image, (center.x, center.y + 1.0))
            px_per_cm = math.sqrt((probe.x - base.x) ** 2 + (probe.y - base.y) ** 2)
            y_top = max(0.0, y_bottom - agent.height_cm * px_per_cm)
            detections.append(
                Detection(
                    box=BoundingBox(x_min, y_top, x_max - x_min, y_bottom - y_top),
                    confidence=confidence,
                    cls="person",
                    track_id=agent.track_id,
                )
            )
        records.append(
            DetectionRecord(
                meta=FrameMeta(cal.camera_id, frame, ts_ms, cal.image_width, cal.image_height),
                detections=tuple(detections),
            )
        )
    return records


def overhead_calibration(
    camera_id: str = "cam-synth",
    floor_width_cm: float = 800.0,
    floor_depth_cm: float = 600.0,
    image_width: int = 1280,
    image_height: int = 720,
    focal_px: float = 600.0,
    pitch_rad: float = 0.6,
    camera_height_cm: float = 350.0,
    standoff_cm: float = 300.0,
) -> Calibration:
    """A ready-made calibration for a pitched overhead camera.

    Models a camera mounted ``camera_height_cm`` above the floor, centered
    on and ``standoff_cm`` back from a ``floor_width_cm x floor_depth_cm``
    rectangle, tilted down by ``pitch_rad``.  The rectangle's corners are
    projected exactly and fed through the normal calibration path, so the
    result behaves like an operator calibration with perfect clicks.

    Because the camera has no roll or yaw, lines of constant floor depth map
    to horizontal image rows; synthetic boxes built on such a calibration
    have exactly level bottom edges, which makes planted geometry recoverable
    to machine precision.
    """
    # Pinhole rows mapping floor (x, y, 1) -> image, y receding from camera.
    cos_t, sin_t = math.cos(pitch_rad), math.sin(pitch_rad)
    cx, cy = floor_width_cm / 2.0, -standoff_cm
    u0, v0 = image_width / 2.0, image_height / 2.0
    f, h = focal_px, camera_height_cm
    w_row = (0.0, cos_t, h * sin_t - cy * cos_t)
    u_row = (f, u0 * cos_t, -f * cx + u0 * w_row[2])
    v_row = (0.0, -f * sin_t + v0 * cos_t, f * (cy * sin_t + h * cos_t) + v0 * w_row[2])

    def project(x: float, y: float) -> PixelPoint:
        w = w_row[1] * y + w_row[2]
        return PixelPoint(
            (u_row[0] * x + u_row[1] * y + u_row[2]) / w,
            (v_row[1] * y + v_row[2]) / w,
        )

    # Floor frame: origin at the rectangle's far-left corner, x rightward,
    # y toward the camera, so image top-left corresponds to floor (0, 0).
    far, near = floor_depth_cm, 0.0
    image_points = (
        project(0.0, far),                 # floor (0, 0): far left
        project(floor_width_cm, far),      # floor (W, 0): far right
        project(floor_width_cm, near),     # floor (W, H): near right
        project(0.0, near),                # floor (0, H): near left
    )
    quad = CalibrationQuad(image_points, floor_width_cm, floor_depth_cm)
    return build_calibration(camera_id, image_width, image_height, quad)


# ---------------------------------------------------------------------------
# Stream orchestration.


@dataclass
class StreamConfig:
    """One camera's ingest source plus its processing configuration.

    source may be a JSONL path/URL understood by ingest.replay, an open
    file-like object, or an in-memory iterable of DetectionRecord.
    """

    camera_id: str
    source: str | Path | IO[str] | Iterable[DetectionRecord]
    calibration: Calibration
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    debounce: DebounceConfig = field(default_factory=DebounceConfig)
    sinks: Sequence = ()
    speed: float = 0.0


@dataclass
class RunSummary:
    mode: str
    alerts: list[Alert]
    episodes: list[EpisodeSummary]
    frames: dict[str, int]
    failures: dict[str, str]
    queue_peaks: dict[str, int]
    delivery_failures: int
    wall_time_s: float
    completions: dict[str, list[tuple[float, int]]]

    def sorted_alert_ids(self) -> list[str]:
        """Alert identity set for mode-equivalence comparisons."""
        return sorted(a.id for a in self.alerts)


def _stream_records(cfg: StreamConfig) -> Iterator[DetectionRecord]:
    if isinstance(cfg.source, (str, Path)) or hasattr(cfg.source, "read"):
        return replay(cfg.source, speed=cfg.speed)
    return iter(cfg.source)


class _StreamState:
    """Everything one stream mutates; never shared across streams."""

    def __init__(self, cfg: StreamConfig, store: EventStore | None,
                 stage_latency_ms: float, per_person_latency_ms: float):
        self.cfg = cfg
        self.store = store
        self.stage_latency_ms = stage_latency_ms
        self.per_person_latency_ms = per_person_latency_ms
        self.tracker = EpisodeTracker(cfg.debounce)
        self.alerts: list[Alert] = []
        self.frames = 0
        self.delivery_failures = 0
        self.completions: list[tuple[float, int]] = []

    def process(self, rec: DetectionRecord) -> None:
        persons = sum(1 for d in rec.detections if d.cls == "person")
        wait_ms = self.stage_latency_ms + self.per_person_latency_ms * persons
        if wait_ms > 0:
            time.sleep(wait_ms / 1000.0)
        report = measure_frame(rec, self.cfg.calibration, self.cfg.monitor)
        fired = debounce_step(self.tracker, report)
        fired += mask_alert_step(self.tracker, rec)
        for alert in fired:
            if self.cfg.sinks:
                statuses = emit(alert, self.cfg.sinks)
                self.delivery_failures += sum(1 for s in statuses if not s.ok)
            if self.store is not None:
                self.store.append(EventRecord.from_alert(alert))
        self.alerts.extend(fired)
        self.frames += 1
        self.completions.append((time.monotonic(), report.matrix.n))

    def finish(self) -> list[EpisodeSummary]:
        episodes = self.tracker.flush()
        if self.store is not None:
            for ep in episodes:
                self.store.append_episode(ep)
            self.store.record_tracks(self.tracker.seen_tracks)
        return episodes


def _validate_streams(streams: Sequence[StreamConfig]) -> None:
    seen = set()
    for cfg in streams:
        if cfg.camera_id in seen:
            raise ConfigError(f"duplicate stream for camera '{cfg.camera_id}'")
        seen.add(cfg.camera_id)
        if cfg.calibration.camera_id != cfg.camera_id:
            raise ConfigError(
                f"stream '{cfg.camera_id}' was given a calibration for "
                f"'{cfg.calibration.camera_id}'"
            )


def _run_sync(states: dict[str, _StreamState]) -> dict[str, str]:
    failures: dict[str, str] = {}
    iters = {cam: _stream_records(st.cfg) for cam, st in states.items()}
    active = list(states)
    while active:
        for cam in list(active):
            try:
                rec = next(iters[cam])
            except StopIteration:
                active.remove(cam)
                continue
            except Exception as exc:  # noqa: BLE001 - stream isolation
                failures[cam] = f"{type(exc).__name__}: {exc}"
                active.remove(cam)
                continue
            try:
                states[cam].process(rec)
            except Exception as exc:  # noqa: BLE001 - stream isolation
                failures[cam] = f"{type(exc).__name__}: {exc}"
                active.remove(cam)
    return failures


class _AsyncStream:
    """Producer/worker pair around one bounded queue."""

    _SENTINEL = None

    def __init__(self, state: _StreamState, capacity: int, drop_oldest: bool):
        self.state = state
        self.queue: queue.Queue = queue.Queue(maxsize=capacity)
        self.drop_oldest = drop_oldest
        self.peak_depth = 0
        self.producer_failure: str | None = None
        self.worker_failure: str | None = None
        self.producer = threading.Thread(target=self._produce, daemon=True)
        self.worker = threading.Thread(target=self._consume, daemon=True)

    @property
    def failure(self) -> str | None:
        return self.worker_failure or self.producer_failure

    def _put(self, item) -> None:
        if not self.drop_oldest:
            self.queue.put(item)
        else:
            while True:
                try:
                    self.queue.put_nowait(item)
                    break
                except queue.Full:
                    try:
                        self.queue.get_nowait()
                    except queue.Empty:
                        pass
        self.peak_depth = max(self.peak_depth, self.queue.qsize())

    def _produce(self) -> None:
        try:
            for rec in _stream_records(self.state.cfg):
                self._put(rec)
        except Exception as exc:  # noqa: BLE001 - stream isolation
            self.producer_failure = f"{type(exc).__name__}: {exc}"
        finally:
            self.queue.put(self._SENTINEL)

    def _consume(self) -> None:
        while True:
            rec = self.queue.get()
            if rec is self._SENTINEL:
                return
            if self.worker_failure is not None:
                continue  # drain after a processing failure so the producer never blocks
            try:
                self.state.process(rec)
            except Exception as exc:  # noqa: BLE001 - stream isolation
                self.worker_failure = f"{type(exc).__name__}: {exc}"

    def start(self) -> None:
        self.producer.start()
        self.worker.start()

    def join(self) -> None:
        self.producer.join()
        self.worker.join()


def run_monitor(
    streams: Sequence[StreamConfig],
    mode: str = "sync",
    store: EventStore | None = None,
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
    drop_oldest: bool = False,
    stage_latency_ms: float = 0.0,
    per_person_latency_ms: float = 0.0,
) -> RunSummary:
    """Process every stream to completion and return the combined summary.

    sync walks the streams round-robin, finishing one frame end to end at a
    time; async gives each stream a producer and a worker thread joined by a
    bounded queue (producers block when it fills unless drop_oldest is set).
    Both modes keep all state partitioned per stream, so for the same input
    they emit the same alert set; only interleaving differs.  One stream
    failing is recorded in the summary and never halts the others.
    """
    if mode not in ("sync", "async"):
        raise ConfigError(f"mode must be 'sync' or 'async', got '{mode}'")
    if queue_capacity < 1:
        raise ConfigError("queue capacity must be at least 1")
    _validate_streams(streams)
    states = {
        cfg.camera_id: _StreamState(cfg, store, stage_latency_ms, per_person_latency_ms)
        for cfg in streams
    }
    started = time.monotonic()
    queue_peaks: dict[str, int] = {}
    if mode == "sync":
        failures = _run_sync(states)
    else:
        runners = {
            cam: _AsyncStream(state, queue_capacity, drop_oldest)
            for cam, state in states.items()
        }
        for runner in runners.values():
            runner.start()
        failures = {}
        for cam, runner in runners.items():
            runner.join()
            queue_peaks[cam] = runner.peak_depth
            if runner.failure is not None:
                failures[cam] = runner.failure
    episodes: list[EpisodeSummary] = []
    for state in states.values():
        episodes.extend(state.finish())
    return RunSummary(
        mode=mode,
        alerts=[a for state in states.values() for a in state.alerts],
        episodes=episodes,
        frames={cam: state.frames for cam, state in states.items()},
        failures=failures,
        queue_peaks=queue_peaks,
        delivery_failures=sum(s.delivery_failures for s in states.values()),
        wall_time_s=time.monotonic() - started,
        completions={cam: list(state.completions) for cam, state in states.items()},
    )


# ---------------------------------------------------------------------------
# Throughput bench.


@dataclass(frozen=True)
class GroupStats:
    samples: int
    fps_min: float
    fps_q1: float
    fps_median: float
    fps_q3: float
    fps_max: float


@dataclass(frozen=True)
class BenchReport:
    mode: str
    groups: dict[int, GroupStats]
    wall_time_s: float


def _fps_samples(summary: RunSummary) -> dict[int, list[float]]:
    """fps per person-count group, from inter-completion gaps per stream.

    The first frame of each stream has no predecessor and is skipped; each
    later frame contributes 1/gap attributed to its own person count.
    """
    groups: dict[int, list[float]] = {}
    for completions in summary.completions.values():
        for (t_prev, _), (t_now, persons) in zip(completions, completions[1:]):
            gap = max(t_now - t_prev, 1e-9)
            groups.setdefault(persons, []).append(1.0 / gap)
    return groups


def _bench_report(summary: RunSummary) -> BenchReport:
    groups = {}
    for persons, samples in sorted(_fps_samples(summary).items()):
        lo, q1, med, q3, hi = np.percentile(samples, [0, 25, 50, 75, 100])
        groups[persons] = GroupStats(len(samples), float(lo), float(q1), float(med), float(q3), float(hi))
    return BenchReport(summary.mode, groups, summary.wall_time_s)


def bench(
    streams: Sequence[StreamConfig],
    stage_latency_ms: float,
    duration_s: float | None = None,
    per_person_latency_ms: float = 0.0,
    queue_capacity: int = DEFAULT_QUEUE_CAPACITY,
) -> tuple[BenchReport, BenchReport]:
    """Run the same input through both modes and report fps per mode.

    The stage latency is an artificial per-frame cost standing in for model
    inference; it is the thing the async pipeline overlaps across streams.
    Streams are materialized first so both modes see identical records, and
    optionally truncated to the first duration_s seconds of stream time.
    """
    if stage_latency_ms < 0:
        raise ConfigError("stage latency cannot be negative")
    _validate_streams(streams)
    materialized = []
    for cfg in streams:
        records = list(_stream_records(cfg))
        if duration_s is not None:
            limit = duration_s * 1000.0
            records = [r for r in records if r.meta.ts_ms <= limit]
        materialized.append(
            StreamConfig(
                camera_id=cfg.camera_id,
                source=records,
                calibration=cfg.calibration,
                monitor=cfg.monitor,
                debounce=cfg.debounce,
            )
        )
    reports = []
    for mode in ("sync", "async"):
        summary = run_monitor(
            materialized,
            mode=mode,
            queue_capacity=queue_capacity,
            stage_latency_ms=stage_latency_ms,
            per_person_latency_ms=per_person_latency_ms,
        )
        reports.append(_bench_report(summary))
    return reports[0], reports[1]


BENCH_CSV_HEADER = "mode,person_count,samples,fps_min,fps_q1,fps_median,fps_q3,fps_max"


def bench_csv(reports: Sequence[BenchReport]) -> str:
    """Boxplot-ready CSV, one row per (mode, person-count group)."""
    lines = [BENCH_CSV_HEADER]
    for report in reports:
        for persons, g in sorted(report.groups.items()):
            lines.append(
                f"{report.mode},{persons},{g.samples},{g.fps_min:.3f},{g.fps_q1:.3f},"
                f"{g.fps_median:.3f},{g.fps_q3:.3f},{g.fps_max:.3f}"
            )
    return "\n".join(lines) + "\n"
