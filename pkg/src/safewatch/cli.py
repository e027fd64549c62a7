"""Command-line interface: one executable exposing every workflow.

Exit codes: 0 success, 1 runtime failure, 2 invalid usage or input,
3 a probed point maps to infinity (measure only).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .alerting import (
    AlertingError,
    DebounceConfig,
    EpisodeTracker,
    EventRecord,
    EventStore,
    LogSink,
    WebhookSink,
    alert_to_dict,
    contacts,
    debounce_step,
    emit,
    mask_alert_step,
)
from .distancing import MonitorConfig, measure_frame, probe_distance, report_to_json_line
from .fixtures import write_grid_fixture
from .geometry import (
    CalibrationQuad,
    GeometryError,
    InvalidQuad,
    PixelPoint,
    PointAtInfinity,
    WorldPoint,
    build_calibration,
    edge_report,
    load_calibration,
    save_calibration,
)
from .ingest import IngestCounters, IngestError, replay, serialize_detection_record
from .metrics import (
    MetricsError,
    auroc,
    confusion_from_scores,
    load_detections_jsonl,
    load_ground_truth_jsonl,
    load_scored_csv,
    mean_average_precision,
    precision_recall,
)
from .pipeline import (
    ConfigError,
    PipelineError,
    StreamConfig,
    SyntheticAgent,
    bench,
    bench_csv,
    overhead_calibration,
    run_monitor,
    synth_scene,
)
from .server import ServerConfig, serve

EDGE_NAMES = ("top", "right", "bottom", "left")


def _parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got '{text}'")
    return float(parts[0]), float(parts[1])


def _parse_size(text: str) -> tuple[float, float]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"expected 'WIDTHxHEIGHT', got '{text}'")
    return float(parts[0]), float(parts[1])


def _debounce_from(args) -> DebounceConfig:
    return DebounceConfig(
        min_duration_ms=args.min_duration_ms,
        max_gap_frames=args.max_gap_frames,
        cooldown_ms=args.cooldown_ms,
    )


def _sinks_from(args) -> list:
    sinks = []
    if getattr(args, "log_sink", None):
        sinks.append(LogSink(args.log_sink))
    if getattr(args, "webhook", None):
        sinks.append(WebhookSink(args.webhook))
    return sinks


def _add_debounce_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-duration-ms", type=int, default=3000,
                   help="violation must persist this long before alerting")
    p.add_argument("--max-gap-frames", type=int, default=2,
                   help="missed frames an episode may bridge")
    p.add_argument("--cooldown-ms", type=int, default=30_000,
                   help="minimum spacing between alerts for the same pair")


def _add_monitor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threshold-cm", type=float, default=200.0,
                   help="distance below which a pair violates (strict)")
    p.add_argument("--min-confidence", type=float, default=0.5)


# ---------------------------------------------------------------------------
# Commands.


def cmd_calibrate(args) -> int:
    points = tuple(PixelPoint(*_parse_point(p)) for p in args.image_points)
    rect_w, rect_h = _parse_size(args.world_rect)
    img_w, img_h = _parse_size(args.image_size)
    quad = CalibrationQuad(points, rect_w, rect_h)
    cal = build_calibration(args.camera_id, int(img_w), int(img_h), quad)
    save_calibration(cal, args.out)
    lengths, errors = edge_report(cal)
    for name, length, err in zip(EDGE_NAMES, lengths, errors):
        print(f"{name} {length:.2f} cm error {err:.4f}%")
    print(f"calibration for '{args.camera_id}' written to {args.out}", file=sys.stderr)
    return 0


def cmd_measure(args) -> int:
    cal = load_calibration(args.calibration)
    a = _parse_point(args.point_a)
    b = _parse_point(args.point_b)
    print(f"{probe_distance(cal.homography, a, b):.2f}")
    return 0


def cmd_replay(args) -> int:
    cal = load_calibration(args.calibration)
    cfg = MonitorConfig(threshold_cm=args.threshold_cm, min_confidence=args.min_confidence)
    tracker = EpisodeTracker(_debounce_from(args))
    sinks = _sinks_from(args)
    store = EventStore(args.store) if args.store else None
    counters = IngestCounters()
    alert_count = 0
    for rec in replay(args.input, speed=args.speed, counters=counters):
        report = measure_frame(rec, cal, cfg)
        if args.emit_reports:
            print(report_to_json_line(report))
        for alert in debounce_step(tracker, report) + mask_alert_step(tracker, rec):
            alert_count += 1
            print(json.dumps(alert_to_dict(alert)))
            if sinks:
                emit(alert, sinks)
            if store is not None:
                store.append(EventRecord.from_alert(alert))
    episodes = tracker.flush()
    if store is not None:
        for ep in episodes:
            store.append_episode(ep)
        store.record_tracks(tracker.seen_tracks)
    print(
        f"frames {counters.frames} detections {counters.detections} "
        f"skipped {counters.skipped_lines} clamped {counters.clamped_boxes} "
        f"dropped {counters.dropped_boxes} alerts {alert_count} episodes {len(episodes)}",
        file=sys.stderr,
    )
    return 0


def cmd_monitor(args) -> int:
    streams = []
    for spec in args.stream:
        try:
            camera_id, rest = spec.split(":", 1)
            source, cal_path = rest.rsplit(":", 1)
        except ValueError:
            raise ValueError(f"--stream must be CAMERA:SOURCE:CALIBRATION, got '{spec}'") from None
        streams.append(
            StreamConfig(
                camera_id=camera_id,
                source=source,
                calibration=load_calibration(cal_path),
                monitor=MonitorConfig(args.threshold_cm, args.min_confidence),
                debounce=_debounce_from(args),
                sinks=_sinks_from(args),
                speed=args.speed,
            )
        )
    store = EventStore(args.store) if args.store else None
    summary = run_monitor(
        streams,
        mode=args.mode,
        store=store,
        queue_capacity=args.queue_capacity,
        drop_oldest=args.drop_oldest,
    )
    for alert_id in summary.sorted_alert_ids():
        print(alert_id)
    print(
        json.dumps(
            {
                "mode": summary.mode,
                "frames": summary.frames,
                "alerts": len(summary.alerts),
                "episodes": len(summary.episodes),
                "failures": summary.failures,
            }
        ),
        file=sys.stderr,
    )
    all_failed = streams and len(summary.failures) == len(streams)
    return 1 if all_failed else 0


def _random_agents(rng: np.random.Generator, count: int, cal) -> list[SyntheticAgent]:
    width = cal.quad.world_width_cm
    depth = cal.quad.world_height_cm
    margin = 50.0
    agents = []
    for track in range(count):
        waypoints = []
        t = 0
        for _ in range(int(rng.integers(1, 4))):
            waypoints.append(
                (
                    WorldPoint(
                        float(rng.uniform(margin, width - margin)),
                        float(rng.uniform(margin, depth - margin)),
                    ),
                    t,
                )
            )
            t += int(rng.integers(500, 2000))
        agents.append(SyntheticAgent(track_id=track + 1, waypoints=tuple(waypoints)))
    return agents


def cmd_synth(args) -> int:
    if args.calibration:
        cal = load_calibration(args.calibration)
    else:
        cal = overhead_calibration(args.camera_id)
    if args.calibration_out:
        save_calibration(cal, args.calibration_out)
    rng = np.random.default_rng(args.seed)
    agents = _random_agents(rng, args.agents, cal)
    records = synth_scene(agents, cal, args.fps, args.duration)
    out = sys.stdout if args.out == "-" else open(args.out, "w", encoding="utf-8")
    try:
        for rec in records:
            out.write(serialize_detection_record(rec) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"{len(records)} frames, {args.agents} agents", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    streams = []
    for i in range(args.streams):
        camera_id = f"bench{i}"
        cal = overhead_calibration(camera_id)
        persons = (i % args.max_persons) + 1
        agents = _random_agents(rng, persons, cal)
        records = synth_scene(agents, cal, args.fps, args.frames / args.fps)
        streams.append(StreamConfig(camera_id, records, cal))
    sync_report, async_report = bench(
        streams,
        stage_latency_ms=args.latency_ms,
        per_person_latency_ms=args.per_person_ms,
    )
    text = bench_csv([sync_report, async_report])
    if args.csv_out:
        Path(args.csv_out).write_text(text)
    else:
        print(text, end="")
    print(
        f"sync wall {sync_report.wall_time_s:.2f}s async wall {async_report.wall_time_s:.2f}s",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args) -> int:
    if args.metric == "auroc":
        print(f"{auroc(load_scored_csv(args.scores)):.4f}")
    elif args.metric == "pr":
        counts = confusion_from_scores(load_scored_csv(args.scores), args.threshold)
        p, r = precision_recall(counts)
        print(f"precision {'undefined' if p is None else f'{p:.4f}'}")
        print(f"recall {'undefined' if r is None else f'{r:.4f}'}")
    else:  # map
        per_class, mean = mean_average_precision(
            load_detections_jsonl(args.detections),
            load_ground_truth_jsonl(args.ground_truth),
            args.iou,
        )
        for cls in sorted(per_class):
            print(f"AP[{cls}] {per_class[cls]:.4f}")
        print(f"mAP {mean:.4f}")
    return 0


def cmd_query(args) -> int:
    store = EventStore(args.store)
    if args.what == "alerts":
        for rec in store.query(args.camera_id, args.kind, args.from_ts, args.to_ts):
            print(json.dumps(rec.to_dict()))
    elif args.what == "trend":
        buckets = store.trend(args.bucket, args.camera_id, args.kind, args.from_ts, args.to_ts)
        for ts, count in buckets:
            print(json.dumps({"bucket_start_ts": ts, "count": count}))
    else:  # contacts
        edges = contacts(
            store.episodes, store.known_tracks, args.track, args.from_ts, args.to_ts
        )
        for edge in edges:
            print(
                json.dumps(
                    {
                        "track_a": edge.track_a,
                        "track_b": edge.track_b,
                        "first_seen_ts_ms": edge.first_seen_ts_ms,
                        "last_seen_ts_ms": edge.last_seen_ts_ms,
                        "min_distance_cm": edge.min_distance_cm,
                        "frames_in_contact": edge.frames_in_contact,
                    }
                )
            )
    return 0


def cmd_serve(args) -> int:
    cfg = ServerConfig(
        calibrations_dir=Path(args.calibrations_dir),
        frames_dir=Path(args.frames_dir) if args.frames_dir else None,
        store_dir=Path(args.store) if args.store else None,
    )
    serve(cfg, host=args.host, port=args.port)
    return 0


def cmd_fixture(args) -> int:
    manifest = write_grid_fixture(args.out, camera_id=args.camera_id, tile_cm=args.tile_cm)
    print(json.dumps(manifest, indent=2))
    return 0


# ---------------------------------------------------------------------------
# Parser.


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safewatch",
        description="Camera-calibrated distancing and mask-compliance monitoring.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("calibrate", help="fit a floor calibration from four marked corners")
    p.add_argument("--camera-id", required=True)
    p.add_argument("--image-points", nargs=4, required=True, metavar="X,Y",
                   help="pixel corners in order top-left top-right bottom-right bottom-left")
    p.add_argument("--world-rect", required=True, metavar="WxH",
                   help="physical rectangle size in cm, e.g. 800x600")
    p.add_argument("--image-size", required=True, metavar="WxH", help="frame size in px")
    p.add_argument("--out", required=True, help="calibration JSON path to write")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("measure", help="floor distance in cm between two image points")
    p.add_argument("--calibration", required=True)
    p.add_argument("--point-a", required=True, metavar="X,Y")
    p.add_argument("--point-b", required=True, metavar="X,Y")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("replay", help="monitor one recorded detection stream")
    p.add_argument("--input", required=True, help="JSONL path, '-' for stdin, or tcp://host:port")
    p.add_argument("--calibration", required=True)
    p.add_argument("--speed", type=float, default=0.0,
                   help="0 = as fast as possible, 1 = real time")
    p.add_argument("--emit-reports", action="store_true",
                   help="print one JSON measurement report per frame")
    p.add_argument("--store", help="event-store directory to append alerts to")
    p.add_argument("--log-sink", help="NDJSON file to deliver alerts to")
    p.add_argument("--webhook", help="URL to POST alerts to")
    _add_monitor_flags(p)
    _add_debounce_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("monitor", help="monitor several streams concurrently")
    p.add_argument("--stream", action="append", required=True,
                   metavar="CAMERA:SOURCE:CALIBRATION",
                   help="repeatable; SOURCE is a JSONL path or tcp://host:port")
    p.add_argument("--mode", choices=("sync", "async"), default="async")
    p.add_argument("--queue-capacity", type=int, default=64)
    p.add_argument("--drop-oldest", action="store_true",
                   help="shed the oldest queued frame when a queue is full")
    p.add_argument("--speed", type=float, default=0.0)
    p.add_argument("--store", help="event-store directory")
    p.add_argument("--log-sink")
    p.add_argument("--webhook")
    _add_monitor_flags(p)
    _add_debounce_flags(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("synth", help="generate a ground-truthed synthetic detection stream")
    p.add_argument("--out", default="-", help="JSONL path or '-' for stdout")
    p.add_argument("--agents", type=int, default=3)
    p.add_argument("--fps", type=float, default=10.0)
    p.add_argument("--duration", type=float, default=5.0, help="seconds of stream time")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--camera-id", default="cam-synth")
    p.add_argument("--calibration", help="use this calibration instead of the built-in camera")
    p.add_argument("--calibration-out", help="also write the calibration used")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="compare sync vs async throughput on synthetic streams")
    p.add_argument("--streams", type=int, default=4)
    p.add_argument("--frames", type=int, default=40, help="frames per stream")
    p.add_argument("--fps", type=float, default=10.0, help="timestamp spacing of the input")
    p.add_argument("--latency-ms", type=float, default=25.0,
                   help="simulated per-frame stage latency")
    p.add_argument("--per-person-ms", type=float, default=0.0,
                   help="extra simulated latency per detected person")
    p.add_argument("--max-persons", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv-out", help="write the boxplot CSV here instead of stdout")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eval", help="detection-quality metrics from files")
    ev = p.add_subparsers(dest="metric", metavar="metric", required=True)
    e = ev.add_parser("auroc", help="AUROC of score,label CSV")
    e.add_argument("--scores", required=True)
    e.set_defaults(func=cmd_eval)
    e = ev.add_parser("pr", help="precision/recall at a score threshold")
    e.add_argument("--scores", required=True)
    e.add_argument("--threshold", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)
    e = ev.add_parser("map", help="mean average precision against ground truth")
    e.add_argument("--detections", required=True)
    e.add_argument("--ground-truth", required=True)
    e.add_argument("--iou", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    p = sub.add_parser("query", help="query a persisted event store")
    q = p.add_subparsers(dest="what", metavar="what", required=True)
    for name in ("alerts", "trend", "contacts"):
        s = q.add_parser(name)
        s.add_argument("--store", required=True)
        s.add_argument("--camera-id")
        s.add_argument("--kind", choices=("distancing", "mask"))
        s.add_argument("--from-ts", type=int)
        s.add_argument("--to-ts", type=int)
        if name == "trend":
            s.add_argument("--bucket", choices=("hour", "day"), default="hour")
        if name == "contacts":
            s.add_argument("--track", type=int, required=True)
        s.set_defaults(func=cmd_query)

    p = sub.add_parser("serve", help="run the HTTP backend for the calibration console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--calibrations-dir", default="calibrations")
    p.add_argument("--frames-dir")
    p.add_argument("--store")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fixture", help="write a synthetic grid reference frame + manifest")
    p.add_argument("--out", required=True, help="frames directory to write into")
    p.add_argument("--camera-id", default="cam-grid")
    p.add_argument("--tile-cm", type=float, default=30.0)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        code = exc.code
        return code if isinstance(code, int) else 2
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except PointAtInfinity as err:
        print(f"PointAtInfinity: {err}", file=sys.stderr)
        return 3
    except InvalidQuad as err:
        for violation in err.violations:
            print(f"invalid quad [{violation.kind}]: {violation.message}", file=sys.stderr)
        return 2
    except (ValueError, ConfigError, json.JSONDecodeError) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 2
    except (IngestError, AlertingError, MetricsError, PipelineError, GeometryError, OSError) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
