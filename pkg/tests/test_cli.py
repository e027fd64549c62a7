"""Command-line behavior: outputs, formats, and the exit-code contract."""

import json

import pytest

from safewatch.cli import main
from safewatch.fixtures import grid_probe_points, write_grid_fixture
from safewatch.geometry import WorldPoint, load_calibration, save_calibration
from safewatch.alerting import EventRecord, EventStore, EpisodeSummary
from safewatch.ingest import serialize_detection_record
from safewatch.pipeline import SyntheticAgent, overhead_calibration, synth_scene


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture()
def grid(tmp_path):
    manifest = write_grid_fixture(tmp_path / "frames")
    cal_path = tmp_path / "cam-grid.json"
    save_calibration(overhead_calibration("cam-grid"), cal_path)
    return manifest, cal_path


def corner_args(manifest):
    return [f"{x},{y}" for x, y in manifest["corner_pixels"]]


# ---------------------------------------------------------------------------
# calibrate / measure


def test_calibrate_exact_corners(tmp_path, capsys, grid):
    manifest, _ = grid
    out = tmp_path / "cal.json"
    code, stdout, stderr = run(
        capsys,
        "calibrate",
        "--camera-id", "floor1",
        "--image-points", *corner_args(manifest),
        "--world-rect", "800x600",
        "--image-size", "1280x720",
        "--out", str(out),
    )
    assert code == 0
    lines = stdout.strip().splitlines()
    assert len(lines) == 4
    for name, line in zip(("top", "right", "bottom", "left"), lines):
        assert line.startswith(name)
        assert float(line.split()[-1].rstrip("%")) < 0.01
    assert load_calibration(out).camera_id == "floor1"


def test_calibrate_collinear_exits_2_naming_triple(tmp_path, capsys):
    code, _, stderr = run(
        capsys,
        "calibrate",
        "--camera-id", "x",
        "--image-points", "0,0", "100,0", "200,0", "0,100",
        "--world-rect", "100x100",
        "--image-size", "1280x720",
        "--out", str(tmp_path / "cal.json"),
    )
    assert code == 2
    assert "collinear" in stderr
    assert "0" in stderr and "1" in stderr and "2" in stderr
    assert not (tmp_path / "cal.json").exists()


def test_measure_same_point_prints_zero(capsys, grid):
    _, cal_path = grid
    code, stdout, _ = run(
        capsys, "measure", "--calibration", str(cal_path),
        "--point-a", "640,500", "--point-b", "640,500",
    )
    assert code == 0
    assert stdout.strip() == "0.00"


def test_measure_tile_probe_reads_30(capsys, grid):
    _, cal_path = grid
    probe_a, probe_b = grid_probe_points(load_calibration(cal_path), 30.0)
    code, stdout, _ = run(
        capsys, "measure", "--calibration", str(cal_path),
        "--point-a", "{},{}".format(*probe_a["pixel"]),
        "--point-b", "{},{}".format(*probe_b["pixel"]),
    )
    assert code == 0
    assert stdout.strip() == "30.00"


def test_measure_point_at_infinity_exits_3(tmp_path, capsys):
    cal = {
        "camera_id": "h",
        "image_width": 1280,
        "image_height": 720,
        "image_points": [[0, 0], [100, 0], [100, 100], [0, 100]],
        "world_rect_cm": [100, 100],
        "homography": [[1, 0, 0], [0, 1, 0], [1, 0, 1]],
        "created_at": "2026-08-01T00:00:00+00:00",
    }
    path = tmp_path / "horizon.json"
    path.write_text(json.dumps(cal))
    code, _, stderr = run(
        capsys, "measure", "--calibration", str(path),
        "--point-a", "0,0", "--point-b=-1,0",
    )
    assert code == 3
    assert "PointAtInfinity" in stderr


def test_measure_malformed_point_exits_2(capsys, grid):
    _, cal_path = grid
    code, _, stderr = run(
        capsys, "measure", "--calibration", str(cal_path),
        "--point-a", "12;9", "--point-b", "0,0",
    )
    assert code == 2


# ---------------------------------------------------------------------------
# replay / monitor


def write_close_pair_stream(tmp_path, camera_id="cam1", frames=20):
    cal = overhead_calibration(camera_id)
    agents = [
        SyntheticAgent(1, ((WorldPoint(300.0, 300.0), 0),)),
        SyntheticAgent(2, ((WorldPoint(500.0, 300.0), 0),)),
    ]
    records = synth_scene(agents, cal, 10, frames / 10)
    stream = tmp_path / f"{camera_id}.jsonl"
    stream.write_text("".join(serialize_detection_record(r) + "\n" for r in records))
    cal_path = tmp_path / f"{camera_id}-cal.json"
    save_calibration(cal, cal_path)
    return stream, cal_path


def test_replay_emits_alerts_and_reports(tmp_path, capsys):
    stream, cal_path = write_close_pair_stream(tmp_path)
    code, stdout, stderr = run(
        capsys,
        "replay", "--input", str(stream), "--calibration", str(cal_path),
        "--emit-reports", "--min-duration-ms", "500",
    )
    assert code == 0
    lines = [json.loads(line) for line in stdout.strip().splitlines()]
    reports = [l for l in lines if "violations" in l]
    alerts = [l for l in lines if "id" in l]
    assert len(reports) == 20
    assert len(alerts) == 1
    assert alerts[0]["id"].startswith("distancing:cam1:t1-t2:")
    assert "frames 20" in stderr


def test_replay_empty_file_exits_1(tmp_path, capsys, grid):
    _, cal_path = grid
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, stderr = run(
        capsys, "replay", "--input", str(empty), "--calibration", str(cal_path)
    )
    assert code == 1
    assert "EmptyStream" in stderr


def test_replay_persists_to_store(tmp_path, capsys):
    stream, cal_path = write_close_pair_stream(tmp_path)
    store_dir = tmp_path / "store"
    code, _, _ = run(
        capsys,
        "replay", "--input", str(stream), "--calibration", str(cal_path),
        "--min-duration-ms", "500", "--store", str(store_dir),
    )
    assert code == 0
    store = EventStore(store_dir)
    assert len(store) == 1
    assert store.known_tracks == {1, 2}


def test_monitor_two_streams(tmp_path, capsys):
    s1, c1 = write_close_pair_stream(tmp_path, "cam1")
    s2, c2 = write_close_pair_stream(tmp_path, "cam2")
    code, stdout, stderr = run(
        capsys,
        "monitor",
        "--stream", f"cam1:{s1}:{c1}",
        "--stream", f"cam2:{s2}:{c2}",
        "--mode", "async", "--min-duration-ms", "500",
    )
    assert code == 0
    ids = stdout.strip().splitlines()
    assert len(ids) == 2 and ids == sorted(ids)
    summary = json.loads(stderr.strip().splitlines()[-1])
    assert summary["frames"] == {"cam1": 20, "cam2": 20}
    assert summary["failures"] == {}


def test_monitor_isolates_bad_stream(tmp_path, capsys):
    s1, c1 = write_close_pair_stream(tmp_path, "cam1")
    _, c2 = write_close_pair_stream(tmp_path, "cam2")
    code, _, stderr = run(
        capsys,
        "monitor",
        "--stream", f"cam1:{s1}:{c1}",
        "--stream", f"cam2:{tmp_path / 'missing.jsonl'}:{c2}",
        "--min-duration-ms", "500",
    )
    assert code == 0
    summary = json.loads(stderr.strip().splitlines()[-1])
    assert list(summary["failures"]) == ["cam2"]


def test_monitor_all_streams_failing_exits_1(tmp_path, capsys):
    _, c1 = write_close_pair_stream(tmp_path, "cam1")
    code, _, stderr = run(
        capsys, "monitor", "--stream", f"cam1:{tmp_path / 'nope.jsonl'}:{c1}"
    )
    assert code == 1


# ---------------------------------------------------------------------------
# synth / bench


def test_synth_is_deterministic_per_seed(tmp_path, capsys):
    outs = []
    for name, seed in (("a", "7"), ("b", "7"), ("c", "8")):
        out = tmp_path / f"{name}.jsonl"
        code, _, _ = run(
            capsys, "synth", "--out", str(out), "--seed", seed,
            "--agents", "2", "--fps", "5", "--duration", "1",
        )
        assert code == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]


def test_synth_writes_usable_calibration(tmp_path, capsys):
    out = tmp_path / "scene.jsonl"
    cal_out = tmp_path / "cal.json"
    code, _, _ = run(
        capsys, "synth", "--out", str(out), "--calibration-out", str(cal_out),
        "--agents", "1", "--fps", "5", "--duration", "1",
    )
    assert code == 0
    code, stdout, _ = run(
        capsys, "replay", "--input", str(out), "--calibration", str(cal_out),
        "--emit-reports",
    )
    assert code == 0
    assert len(stdout.strip().splitlines()) == 5


def test_bench_writes_csv(tmp_path, capsys):
    csv_path = tmp_path / "bench.csv"
    code, _, _ = run(
        capsys,
        "bench", "--streams", "2", "--frames", "6", "--latency-ms", "1",
        "--csv-out", str(csv_path),
    )
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "mode,person_count,samples,fps_min,fps_q1,fps_median,fps_q3,fps_max"
    assert any(line.startswith("sync,") for line in lines[1:])
    assert any(line.startswith("async,") for line in lines[1:])


# ---------------------------------------------------------------------------
# eval


def test_eval_auroc_hand_case(tmp_path, capsys):
    scores = tmp_path / "scores.csv"
    scores.write_text("score,label\n0.9,1\n0.8,0\n0.7,1\n0.1,0\n")
    code, stdout, _ = run(capsys, "eval", "auroc", "--scores", str(scores))
    assert code == 0
    assert stdout.strip() == "0.7500"


def test_eval_auroc_degenerate_exits_1(tmp_path, capsys):
    scores = tmp_path / "scores.csv"
    scores.write_text("0.9,1\n0.7,1\n")
    code, _, stderr = run(capsys, "eval", "auroc", "--scores", str(scores))
    assert code == 1
    assert "DegenerateLabels" in stderr


def test_eval_pr_output(tmp_path, capsys):
    scores = tmp_path / "scores.csv"
    scores.write_text("0.9,1\n0.8,1\n0.7,0\n0.2,1\n0.1,0\n")
    code, stdout, _ = run(capsys, "eval", "pr", "--scores", str(scores), "--threshold", "0.5")
    assert code == 0
    assert stdout.splitlines() == ["precision 0.6667", "recall 0.6667"]


def test_eval_map_perfect_match(tmp_path, capsys):
    dets = tmp_path / "dets.jsonl"
    gt = tmp_path / "gt.jsonl"
    dets.write_text(
        json.dumps(
            {
                "camera_id": "c", "frame": 0, "ts_ms": 0, "width": 640, "height": 480,
                "detections": [
                    {"x_min": 10, "y_min": 10, "width": 50, "height": 80,
                     "confidence": 0.9, "class": "person"}
                ],
            }
        )
        + "\n"
    )
    gt.write_text(
        json.dumps(
            {"image_id": "c:0", "x_min": 10, "y_min": 10, "width": 50, "height": 80}
        )
        + "\n"
    )
    code, stdout, _ = run(
        capsys, "eval", "map", "--detections", str(dets), "--ground-truth", str(gt)
    )
    assert code == 0
    assert stdout.splitlines() == ["AP[person] 1.0000", "mAP 1.0000"]


# ---------------------------------------------------------------------------
# query


def seeded_store(tmp_path):
    store_dir = tmp_path / "store"
    store = EventStore(store_dir)
    hour = 3_600_000
    for rid, started in (("e1", 1000), ("e2", 2000), ("e3", hour + 1)):
        store.append(
            EventRecord(
                id=rid, kind="distancing", camera_id="cam1", started_ts_ms=started,
                ended_ts_ms=None, subject={}, min_distance_cm=120.0,
                frame_span=(0, 3), persisted_at="2026-08-01T00:00:00+00:00",
            )
        )
    store.append_episode(
        EpisodeSummary(
            camera_id="cam1", kind="distancing", track_a=1, track_b=2,
            started_ts_ms=0, last_active_ts_ms=900, ended_ts_ms=900,
            frames=5, min_distance_cm=110.0, alerted=True,
        ),
        persisted_at="2026-08-01T00:00:00+00:00",
    )
    store.record_tracks([1, 2])
    return store_dir


def test_query_alerts_ndjson(tmp_path, capsys):
    store_dir = seeded_store(tmp_path)
    code, stdout, _ = run(capsys, "query", "alerts", "--store", str(store_dir))
    rows = [json.loads(line) for line in stdout.strip().splitlines()]
    assert code == 0
    assert [r["id"] for r in rows] == ["e1", "e2", "e3"]
    code, stdout, _ = run(
        capsys, "query", "alerts", "--store", str(store_dir), "--from-ts", "1500"
    )
    assert [json.loads(l)["id"] for l in stdout.strip().splitlines()] == ["e2", "e3"]


def test_query_trend_matches_hand_buckets(tmp_path, capsys):
    store_dir = seeded_store(tmp_path)
    code, stdout, _ = run(
        capsys, "query", "trend", "--store", str(store_dir), "--bucket", "hour"
    )
    assert code == 0
    rows = [json.loads(line) for line in stdout.strip().splitlines()]
    assert rows == [
        {"bucket_start_ts": 0, "count": 2},
        {"bucket_start_ts": 3_600_000, "count": 1},
    ]


def test_query_contacts(tmp_path, capsys):
    store_dir = seeded_store(tmp_path)
    code, stdout, _ = run(
        capsys, "query", "contacts", "--store", str(store_dir), "--track", "1"
    )
    assert code == 0
    edge = json.loads(stdout.strip())
    assert edge["track_a"] == 1 and edge["track_b"] == 2
    assert edge["frames_in_contact"] == 5
    code, _, stderr = run(
        capsys, "query", "contacts", "--store", str(store_dir), "--track", "99"
    )
    assert code == 1
    assert "UnknownTrack" in stderr


# ---------------------------------------------------------------------------
# fixture / usage


def test_fixture_command_writes_frame_and_manifest(tmp_path, capsys):
    out = tmp_path / "frames"
    code, stdout, _ = run(capsys, "fixture", "--out", str(out))
    assert code == 0
    assert (out / "cam-grid.png").is_file()
    manifest = json.loads(stdout)
    assert len(manifest["corner_pixels"]) == 4
    assert manifest == json.loads((out / "cam-grid.manifest.json").read_text())


def test_unknown_command_exits_2(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_no_command_prints_help(capsys):
    code, stdout, _ = run(capsys)
    assert code == 2
    assert "usage:" in stdout
