"""Debounced alerting, delivery sinks, and the append-only event store.

A raw violation list is far too noisy to page anyone: two people brushing
past each other for a frame is not an incident.  Violations are therefore
grouped into episodes per (camera, pair) key; an episode must persist for a
minimum duration before it alerts, may bridge short detector dropouts, and
is rate-limited per key afterwards.
"""

from __future__ import annotations

import json
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .distancing import FrameReport
from .ingest import DetectionRecord
from .masks import MaskConfig, classify_decision

KIND_DISTANCING = "distancing"
KIND_MASK = "mask"

# Pair keys sort track ids so (a, b) and (b, a) are the same episode.
Key = tuple


class AlertingError(Exception):
    pass


class OutOfOrderFrame(AlertingError):
    """A camera's timestamps regressed by more than the 1 ms jitter budget."""


class DuplicateId(AlertingError):
    pass


class UnknownTrack(AlertingError):
    """The queried track id never appeared in the monitored footage."""


@dataclass(frozen=True)
class DebounceConfig:
    min_duration_ms: int = 3000
    max_gap_frames: int = 2
    cooldown_ms: int = 30000


@dataclass(frozen=True)
class Alert:
    """One emitted incident.  ended_ts_ms is None while the episode is open.

    Ids are derived from (kind, camera, key, episode start), so replaying the
    same footage produces the same ids regardless of execution mode.
    """

    id: str
    kind: str
    camera_id: str
    started_ts_ms: int
    ended_ts_ms: int | None
    subject: dict
    min_distance_cm: float | None
    frame_span: tuple[int, int]


@dataclass(frozen=True)
class EpisodeSummary:
    """A closed (or flushed) violation episode, alerted or not."""

    camera_id: str
    kind: str
    track_a: int | None
    track_b: int | None
    started_ts_ms: int
    last_active_ts_ms: int
    ended_ts_ms: int
    frames: int
    min_distance_cm: float | None
    alerted: bool

    def to_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "kind": self.kind,
            "track_a": self.track_a,
            "track_b": self.track_b,
            "started_ts_ms": self.started_ts_ms,
            "last_active_ts_ms": self.last_active_ts_ms,
            "ended_ts_ms": self.ended_ts_ms,
            "frames": self.frames,
            "min_distance_cm": self.min_distance_cm,
            "alerted": self.alerted,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EpisodeSummary":
        return cls(
            camera_id=obj["camera_id"],
            kind=obj["kind"],
            track_a=obj["track_a"],
            track_b=obj["track_b"],
            started_ts_ms=obj["started_ts_ms"],
            last_active_ts_ms=obj["last_active_ts_ms"],
            ended_ts_ms=obj["ended_ts_ms"],
            frames=obj["frames"],
            min_distance_cm=obj["min_distance_cm"],
            alerted=obj["alerted"],
        )


@dataclass(frozen=True)
class ContactEdge:
    track_a: int
    track_b: int
    first_seen_ts_ms: int
    last_seen_ts_ms: int
    min_distance_cm: float | None
    frames_in_contact: int


@dataclass
class Observation:
    """One key's appearance in the current frame."""

    subject: dict
    distance_cm: float | None = None


@dataclass
class _Episode:
    camera_id: str
    kind: str
    key: Key
    subject: dict
    started_ts_ms: int
    last_active_ts_ms: int
    first_frame: int
    last_frame: int
    frames: int = 1
    min_distance_cm: float | None = None
    gap_count: int = 0
    alerted: bool = False


def _key_text(key: Key) -> str:
    tag = key[0]
    short = "t" if tag == "track" else "i"
    return "-".join(f"{short}{v}" for v in key[1:])


def _tracks_of(key: Key) -> tuple[int | None, int | None]:
    if key[0] != "track":
        return (None, None)
    ids = key[1:]
    if len(ids) == 1:
        return (ids[0], None)
    return (ids[0], ids[1])


class EpisodeTracker:
    """The debounce state machine; one instance may serve many cameras.

    State is partitioned by camera, so running one shared tracker over an
    interleaved stream and running one tracker per camera produce the same
    alerts for the same per-camera frame sequences.
    """

    def __init__(self, cfg: DebounceConfig = DebounceConfig()):
        self.cfg = cfg
        self._open: dict[str, dict[tuple[str, Key], _Episode]] = {}
        self._last_ts: dict[str, int] = {}
        self._last_emit: dict[tuple[str, str, Key], int] = {}
        self._closed: list[EpisodeSummary] = []
        self.seen_tracks: set[int] = set()

    def step(
        self, camera_id: str, ts_ms: int, frame_index: int, kind: str, active: dict[Key, Observation]
    ) -> list[Alert]:
        """Advance one frame; returns alerts that fired on this frame."""
        last = self._last_ts.get(camera_id)
        if last is not None and ts_ms < last - 1:
            raise OutOfOrderFrame(
                f"camera '{camera_id}' went from {last} ms back to {ts_ms} ms"
            )
        self._last_ts[camera_id] = max(ts_ms, last) if last is not None else ts_ms

        cam_open = self._open.setdefault(camera_id, {})

        # Every processed frame ticks the gap counter of episodes (of this
        # kind) that did not re-appear; overflow closes them.
        for open_key in list(cam_open):
            k_kind, key = open_key
            if k_kind != kind or key in active:
                continue
            ep = cam_open[open_key]
            ep.gap_count += 1
            if ep.gap_count > self.cfg.max_gap_frames:
                self._close(cam_open, open_key)

        alerts: list[Alert] = []
        for key, obs in active.items():
            open_key = (kind, key)
            ep = cam_open.get(open_key)
            if ep is None:
                ep = _Episode(
                    camera_id=camera_id,
                    kind=kind,
                    key=key,
                    subject=dict(obs.subject),
                    started_ts_ms=ts_ms,
                    last_active_ts_ms=ts_ms,
                    first_frame=frame_index,
                    last_frame=frame_index,
                    min_distance_cm=obs.distance_cm,
                )
                cam_open[open_key] = ep
            else:
                ep.gap_count = 0
                ep.last_active_ts_ms = ts_ms
                ep.last_frame = frame_index
                ep.frames += 1
                if obs.distance_cm is not None:
                    if ep.min_distance_cm is None or obs.distance_cm < ep.min_distance_cm:
                        ep.min_distance_cm = obs.distance_cm

            duration = ts_ms - ep.started_ts_ms
            if ep.alerted or duration < self.cfg.min_duration_ms:
                continue
            emit_key = (camera_id, kind, key)
            last_emit = self._last_emit.get(emit_key)
            if last_emit is not None and ts_ms - last_emit < self.cfg.cooldown_ms:
                continue  # key is cooling down; this episode stays silent for now
            ep.alerted = True
            self._last_emit[emit_key] = ts_ms
            alerts.append(
                Alert(
                    id=f"{kind}:{camera_id}:{_key_text(key)}:{ep.started_ts_ms}",
                    kind=kind,
                    camera_id=camera_id,
                    started_ts_ms=ep.started_ts_ms,
                    ended_ts_ms=None,
                    subject=dict(ep.subject),
                    min_distance_cm=ep.min_distance_cm,
                    frame_span=(ep.first_frame, ep.last_frame),
                )
            )
        return alerts

    def _close(self, cam_open: dict, open_key: tuple[str, Key]) -> None:
        ep = cam_open.pop(open_key)
        track_a, track_b = _tracks_of(ep.key)
        self._closed.append(
            EpisodeSummary(
                camera_id=ep.camera_id,
                kind=ep.kind,
                track_a=track_a,
                track_b=track_b,
                started_ts_ms=ep.started_ts_ms,
                last_active_ts_ms=ep.last_active_ts_ms,
                ended_ts_ms=ep.last_active_ts_ms,
                frames=ep.frames,
                min_distance_cm=ep.min_distance_cm,
                alerted=ep.alerted,
            )
        )

    def note_tracks(self, track_ids: Iterable[int | None]) -> None:
        self.seen_tracks.update(t for t in track_ids if t is not None)

    def flush(self) -> list[EpisodeSummary]:
        """Close every open episode (end of stream) and return all summaries."""
        for camera_id in list(self._open):
            cam_open = self._open[camera_id]
            for open_key in list(cam_open):
                self._close(cam_open, open_key)
        return list(self._closed)

    @property
    def episodes(self) -> list[EpisodeSummary]:
        return list(self._closed)


def debounce_step(tracker: EpisodeTracker, report: FrameReport) -> list[Alert]:
    """Feed one frame's distancing violations into the tracker.

    Pairs are keyed by sorted track ids when both are tracked, falling back
    to the pair of original detection indices (best effort across frames).
    """
    tracker.note_tracks(report.track_ids)
    active: dict[Key, Observation] = {}
    for v in report.violations:
        ta = report.track_ids[v.i]
        tb = report.track_ids[v.j]
        si = report.source_indices[v.i]
        sj = report.source_indices[v.j]
        if ta is not None and tb is not None:
            a, b = sorted((ta, tb))
            key: Key = ("track", a, b)
            subject = {"track_a": a, "track_b": b, "detections": [si, sj]}
        else:
            key = ("index", si, sj)
            subject = {"detections": [si, sj]}
        existing = active.get(key)
        if existing is None or (
            existing.distance_cm is not None and v.distance_cm < existing.distance_cm
        ):
            active[key] = Observation(subject, v.distance_cm)
    return tracker.step(
        report.meta.camera_id, report.meta.ts_ms, report.meta.frame_index, KIND_DISTANCING, active
    )


def mask_alert_step(
    tracker: EpisodeTracker, rec: DetectionRecord, mask_cfg: MaskConfig = MaskConfig()
) -> list[Alert]:
    """Feed one frame's bare-face detections into the tracker.

    Only face detections that carry a mask score participate; scores at or
    above the decision threshold count as masked and never alert.
    """
    active: dict[Key, Observation] = {}
    for idx, det in enumerate(rec.detections):
        if det.cls != "face" or det.mask_score is None:
            continue
        if classify_decision(det.mask_score, mask_cfg.decision_threshold) == "mask":
            continue
        if det.track_id is not None:
            key: Key = ("track", det.track_id)
            subject = {"track": det.track_id, "detection": idx}
        else:
            key = ("index", idx)
            subject = {"detection": idx}
        active[key] = Observation(subject)
    return tracker.step(
        rec.meta.camera_id, rec.meta.ts_ms, rec.meta.frame_index, KIND_MASK, active
    )


# ---------------------------------------------------------------------------
# Delivery sinks.


@dataclass(frozen=True)
class DeliveryStatus:
    sink: str
    ok: bool
    detail: str = ""


def alert_to_dict(alert: Alert) -> dict:
    return {
        "id": alert.id,
        "kind": alert.kind,
        "camera_id": alert.camera_id,
        "started_ts_ms": alert.started_ts_ms,
        "ended_ts_ms": alert.ended_ts_ms,
        "subject": alert.subject,
        "min_distance_cm": alert.min_distance_cm,
        "frame_span": list(alert.frame_span),
    }


class LogSink:
    """Appends one JSON line per alert to a local file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.name = f"log:{self.path}"

    def deliver(self, alert: Alert) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(alert_to_dict(alert), separators=(",", ":")) + "\n")


class CommandSink:
    """Pipes the alert JSON to an external command; exit 0 means delivered."""

    def __init__(self, argv: Sequence[str], timeout_s: float = 10.0):
        self.argv = list(argv)
        self.timeout_s = timeout_s
        self.name = f"command:{self.argv[0]}"

    def deliver(self, alert: Alert) -> None:
        payload = json.dumps(alert_to_dict(alert)).encode("utf-8")
        proc = subprocess.run(
            self.argv, input=payload, capture_output=True, timeout=self.timeout_s
        )
        if proc.returncode != 0:
            raise AlertingError(
                f"command exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:200]}"
            )


class WebhookSink:
    """POSTs the alert JSON to an HTTP endpoint; any 2xx means delivered."""

    def __init__(self, url: str, timeout_s: float = 10.0):
        self.url = url
        self.timeout_s = timeout_s
        self.name = f"webhook:{url}"

    def deliver(self, alert: Alert) -> None:
        payload = json.dumps(alert_to_dict(alert)).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}, method="POST"
        )
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            if not 200 <= resp.status < 300:
                raise AlertingError(f"webhook returned status {resp.status}")


def emit(alert: Alert, sinks: Sequence) -> list[DeliveryStatus]:
    """Deliver to every sink; one sink failing never blocks the others."""
    statuses = []
    for sink in sinks:
        try:
            sink.deliver(alert)
            statuses.append(DeliveryStatus(sink.name, True))
        except Exception as exc:  # noqa: BLE001 - failure isolation is the contract
            statuses.append(DeliveryStatus(sink.name, False, str(exc)[:300]))
    return statuses


# ---------------------------------------------------------------------------
# Event store.


@dataclass(frozen=True)
class EventRecord:
    """An alert as persisted, plus the wall-clock time it was stored."""

    id: str
    kind: str
    camera_id: str
    started_ts_ms: int
    ended_ts_ms: int | None
    subject: dict
    min_distance_cm: float | None
    frame_span: tuple[int, int] | None
    persisted_at: str

    @classmethod
    def from_alert(cls, alert: Alert, persisted_at: str | None = None) -> "EventRecord":
        return cls(
            id=alert.id,
            kind=alert.kind,
            camera_id=alert.camera_id,
            started_ts_ms=alert.started_ts_ms,
            ended_ts_ms=alert.ended_ts_ms,
            subject=dict(alert.subject),
            min_distance_cm=alert.min_distance_cm,
            frame_span=alert.frame_span,
            persisted_at=persisted_at or datetime.now(timezone.utc).isoformat(),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "camera_id": self.camera_id,
            "started_ts_ms": self.started_ts_ms,
            "ended_ts_ms": self.ended_ts_ms,
            "subject": self.subject,
            "min_distance_cm": self.min_distance_cm,
            "frame_span": list(self.frame_span) if self.frame_span is not None else None,
            "persisted_at": self.persisted_at,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EventRecord":
        span = obj.get("frame_span")
        return cls(
            id=obj["id"],
            kind=obj["kind"],
            camera_id=obj["camera_id"],
            started_ts_ms=obj["started_ts_ms"],
            ended_ts_ms=obj.get("ended_ts_ms"),
            subject=obj.get("subject", {}),
            min_distance_cm=obj.get("min_distance_cm"),
            frame_span=(span[0], span[1]) if span else None,
            persisted_at=obj["persisted_at"],
        )


HOUR_MS = 3_600_000
DAY_MS = 86_400_000


class EventStore:
    """Append-only NDJSON files, one per UTC day, with an in-memory index.

    Records are immutable once written; appends are serialized by a lock so
    concurrent pipeline workers can share one store.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._records: list[EventRecord] = []
        self._ids: set[str] = set()
        self._episodes: list[EpisodeSummary] = []
        self._tracks: set[int] = set()
        self._load()

    def _load(self) -> None:
        for path in sorted(self.directory.glob("events-*.ndjson")):
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = EventRecord.from_dict(json.loads(line))
                self._records.append(rec)
                self._ids.add(rec.id)
        for path in sorted(self.directory.glob("episodes-*.ndjson")):
            for line in path.read_text().splitlines():
                if line.strip():
                    self._episodes.append(EpisodeSummary.from_dict(json.loads(line)))
        tracks_path = self.directory / "tracks.ndjson"
        if tracks_path.exists():
            for line in tracks_path.read_text().splitlines():
                if line.strip():
                    self._tracks.add(int(json.loads(line)["track_id"]))

    def _day_file(self, prefix: str, persisted_at: str) -> Path:
        day = persisted_at[:10]  # RFC 3339 starts with YYYY-MM-DD
        return self.directory / f"{prefix}-{day}.ndjson"

    def append(self, record: EventRecord) -> None:
        with self._lock:
            if record.id in self._ids:
                raise DuplicateId(f"event id '{record.id}' was already stored")
            path = self._day_file("events", record.persisted_at)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), separators=(",", ":")) + "\n")
            self._records.append(record)
            self._ids.add(record.id)

    def append_episode(self, summary: EpisodeSummary, persisted_at: str | None = None) -> None:
        persisted_at = persisted_at or datetime.now(timezone.utc).isoformat()
        with self._lock:
            path = self._day_file("episodes", persisted_at)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(summary.to_dict(), separators=(",", ":")) + "\n")
            self._episodes.append(summary)

    def record_tracks(self, track_ids: Iterable[int]) -> None:
        with self._lock:
            new = sorted(set(track_ids) - self._tracks)
            if not new:
                return
            with open(self.directory / "tracks.ndjson", "a", encoding="utf-8") as fh:
                for t in new:
                    fh.write(json.dumps({"track_id": t}) + "\n")
            self._tracks.update(new)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    @property
    def episodes(self) -> list[EpisodeSummary]:
        with self._lock:
            return list(self._episodes)

    @property
    def known_tracks(self) -> set[int]:
        with self._lock:
            return set(self._tracks)

    @staticmethod
    def _matches(
        rec: EventRecord,
        camera_id: str | None,
        kind: str | None,
        from_ts: int | None,
        to_ts: int | None,
    ) -> bool:
        if camera_id is not None and rec.camera_id != camera_id:
            return False
        if kind is not None and rec.kind != kind:
            return False
        if from_ts is not None and rec.started_ts_ms < from_ts:
            return False
        if to_ts is not None and rec.started_ts_ms > to_ts:
            return False
        return True

    def query(
        self,
        camera_id: str | None = None,
        kind: str | None = None,
        from_ts: int | None = None,
        to_ts: int | None = None,
    ) -> list[EventRecord]:
        """Filtered events ordered by start time (ties by id). Bounds inclusive."""
        with self._lock:
            rows = [r for r in self._records if self._matches(r, camera_id, kind, from_ts, to_ts)]
        return sorted(rows, key=lambda r: (r.started_ts_ms, r.id))

    def trend(
        self,
        bucket: str = "hour",
        camera_id: str | None = None,
        kind: str | None = None,
        from_ts: int | None = None,
        to_ts: int | None = None,
    ) -> list[tuple[int, int]]:
        """(bucket_start_ts_ms, count) per UTC hour or day; empty buckets omitted."""
        if bucket not in ("hour", "day"):
            raise ValueError(f"bucket must be 'hour' or 'day', got '{bucket}'")
        size = HOUR_MS if bucket == "hour" else DAY_MS
        counts: dict[int, int] = {}
        for rec in self.query(camera_id, kind, from_ts, to_ts):
            start = (rec.started_ts_ms // size) * size
            counts[start] = counts.get(start, 0) + 1
        return sorted(counts.items())


def contacts(
    episodes: Sequence[EpisodeSummary],
    seen_tracks: set[int],
    track_id: int,
    from_ts: int | None = None,
    to_ts: int | None = None,
) -> list[ContactEdge]:
    """Aggregate who shared distancing episodes with a track in a window.

    An episode counts when its active span overlaps [from_ts, to_ts].  A
    track that was never observed raises UnknownTrack, which is different
    from a known track with no contacts (empty list).
    """
    if track_id not in seen_tracks:
        raise UnknownTrack(f"track {track_id} never appeared in the monitored streams")
    per_partner: dict[int, list[EpisodeSummary]] = {}
    for ep in episodes:
        if ep.kind != KIND_DISTANCING or ep.track_a is None or ep.track_b is None:
            continue
        if track_id not in (ep.track_a, ep.track_b):
            continue
        if from_ts is not None and ep.last_active_ts_ms < from_ts:
            continue
        if to_ts is not None and ep.started_ts_ms > to_ts:
            continue
        partner = ep.track_b if ep.track_a == track_id else ep.track_a
        per_partner.setdefault(partner, []).append(ep)
    edges = []
    for partner in sorted(per_partner):
        eps = per_partner[partner]
        distances = [e.min_distance_cm for e in eps if e.min_distance_cm is not None]
        a, b = sorted((track_id, partner))
        edges.append(
            ContactEdge(
                track_a=a,
                track_b=b,
                first_seen_ts_ms=min(e.started_ts_ms for e in eps),
                last_seen_ts_ms=max(e.last_active_ts_ms for e in eps),
                min_distance_cm=min(distances) if distances else None,
                frames_in_contact=sum(e.frames for e in eps),
            )
        )
    return edges
