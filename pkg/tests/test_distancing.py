"""Distance measurement tests with a brute-force oracle."""

import json
import math

import numpy as np
import pytest

from safewatch import distancing as dist
from safewatch import geometry as geo
from safewatch import ingest


def brute_force_matrix(pairs):
    """Independent double-loop enumeration with longhand arithmetic."""
    n = len(pairs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            best = math.inf
            for a in pairs[i]:
                for b in pairs[j]:
                    dx = a[0] - b[0]
                    dy = a[1] - b[1]
                    d = math.sqrt(dx * dx + dy * dy)
                    if d < best:
                        best = d
            out[i, j] = best
    return out


def identity_calibration(camera_id="cam1", width=640, height=480) -> geo.Calibration:
    """Pixels equal centimeters: a 100 px quad declared as a 100 cm square."""
    quad = geo.CalibrationQuad(
        (
            geo.PixelPoint(0, 0),
            geo.PixelPoint(100, 0),
            geo.PixelPoint(100, 100),
            geo.PixelPoint(0, 100),
        ),
        100.0,
        100.0,
    )
    return geo.build_calibration(camera_id, width, height, quad)


def person(x_min, y_min, w, h, confidence=0.9, cls="person", track_id=None):
    return ingest.Detection(ingest.BoundingBox(x_min, y_min, w, h), confidence, cls, track_id)


def record(detections, camera_id="cam1", frame=0, ts_ms=0, width=640, height=480):
    return ingest.DetectionRecord(
        ingest.FrameMeta(camera_id, frame, ts_ms, width, height), tuple(detections)
    )


# ---------------------------------------------------------------------------
# Primitives.


def test_ground_points_are_bottom_corners():
    left, right = dist.ground_points(ingest.BoundingBox(10, 20, 30, 40))
    assert left == (10, 60)
    assert right == (40, 60)


def test_euclidean_three_four_five():
    assert dist.euclidean((0.0, 0.0), (3.0, 4.0)) == 5.0


def test_pair_distance_picks_closest_corners():
    a = (geo.WorldPoint(0, 0), geo.WorldPoint(10, 0))
    b = (geo.WorldPoint(13, 4), geo.WorldPoint(23, 4))
    assert dist.pair_distance(a, b) == 5.0


def test_pair_distance_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(100):
        a = tuple(geo.WorldPoint(*rng.uniform(-500, 500, 2)) for _ in range(2))
        b = tuple(geo.WorldPoint(*rng.uniform(-500, 500, 2)) for _ in range(2))
        assert dist.pair_distance(a, b) == dist.pair_distance(b, a)


# ---------------------------------------------------------------------------
# Matrix.


def test_empty_frame_gives_empty_matrix():
    m = dist.distance_matrix([])
    assert m.n == 0
    assert dist.find_violations(m) == []


def test_matrix_matches_brute_force_exactly():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(0, 8))
        pairs = []
        for _ in range(n):
            x, y = rng.uniform(0, 1000, 2)
            w = rng.uniform(10, 80)
            pairs.append((geo.WorldPoint(x, y), geo.WorldPoint(x + w, y)))
        ours = dist.distance_matrix(pairs).values
        assert np.array_equal(ours, brute_force_matrix(pairs))


def test_matrix_invariants():
    rng = np.random.default_rng(7)
    pairs = [
        (geo.WorldPoint(*rng.uniform(0, 500, 2)), geo.WorldPoint(*rng.uniform(0, 500, 2)))
        for _ in range(6)
    ]
    m = dist.distance_matrix(pairs).values
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) == 0.0)
    off_diag = m[~np.eye(6, dtype=bool)]
    assert np.all(off_diag >= 0.0)


def test_matrix_invariant_under_rigid_motion():
    rng = np.random.default_rng(11)
    pairs = [
        (geo.WorldPoint(*rng.uniform(0, 500, 2)), geo.WorldPoint(*rng.uniform(0, 500, 2)))
        for _ in range(5)
    ]
    theta = 0.83
    c, s = math.cos(theta), math.sin(theta)
    tx, ty = 123.4, -55.5

    def move(p):
        return geo.WorldPoint(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty)

    moved = [(move(a), move(b)) for a, b in pairs]
    before = dist.distance_matrix(pairs).values
    after = dist.distance_matrix(moved).values
    assert np.allclose(before, after, atol=1e-9)


# ---------------------------------------------------------------------------
# Violations.


def test_violation_strictly_below_threshold():
    a = (geo.WorldPoint(0, 0), geo.WorldPoint(10, 0))
    b = (geo.WorldPoint(210, 0), geo.WorldPoint(220, 0))  # exactly 200 apart
    c = (geo.WorldPoint(209.9, 0), geo.WorldPoint(219.9, 0))
    m = dist.distance_matrix([a, b])
    assert dist.find_violations(m, 200.0) == []
    m2 = dist.distance_matrix([a, c])
    found = dist.find_violations(m2, 200.0)
    assert len(found) == 1 and found[0].i == 0 and found[0].j == 1


def test_violations_indices_ordered():
    pairs = [
        (geo.WorldPoint(0, 0), geo.WorldPoint(10, 0)),
        (geo.WorldPoint(50, 0), geo.WorldPoint(60, 0)),
        (geo.WorldPoint(100, 0), geo.WorldPoint(110, 0)),
    ]
    m = dist.distance_matrix(pairs)
    violations = dist.find_violations(m, 200.0)
    assert [(v.i, v.j) for v in violations] == [(0, 1), (0, 2), (1, 2)]
    for v in violations:
        assert v.distance_cm == m.values[v.i, v.j]


# ---------------------------------------------------------------------------
# measure_frame.


def test_measure_frame_identity_calibration():
    cal = identity_calibration()
    rec = record([person(0, 0, 10, 60, track_id=1), person(13, 0, 10, 60, track_id=2)])
    report = dist.measure_frame(rec, cal, dist.MonitorConfig(threshold_cm=200.0))
    assert report.positions[0][0] == pytest.approx((0.0, 60.0), abs=1e-9)
    assert report.positions[0][1] == pytest.approx((10.0, 60.0), abs=1e-9)
    assert report.matrix.values[0, 1] == pytest.approx(3.0, abs=1e-9)
    assert len(report.violations) == 1
    assert report.track_ids == (1, 2)
    assert report.source_indices == (0, 1)


def test_measure_frame_filters_class_and_confidence():
    cal = identity_calibration()
    rec = record(
        [
            person(0, 0, 10, 60, confidence=0.9),
            person(20, 0, 10, 60, confidence=0.4),  # below the floor
            person(40, 0, 10, 60, cls="face"),
            person(60, 0, 10, 60, confidence=0.5),  # at the floor, kept
        ]
    )
    report = dist.measure_frame(rec, cal, dist.MonitorConfig(min_confidence=0.5))
    assert report.source_indices == (0, 3)
    assert report.matrix.n == 2


def test_measure_frame_counts_points_at_infinity():
    # w = 1 - x/100 vanishes along the x = 100 pixel column.
    quad = geo.CalibrationQuad(
        (
            geo.PixelPoint(0, 0),
            geo.PixelPoint(100, 0),
            geo.PixelPoint(100, 100),
            geo.PixelPoint(0, 100),
        ),
        100.0,
        100.0,
    )
    horizon = geo.Homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [-0.01, 0, 1.0]]))
    cal = geo.Calibration("cam1", 640, 480, quad, horizon)
    rec = record([person(95, 0, 5, 60), person(200, 0, 10, 60)])
    report = dist.measure_frame(rec, cal)
    assert report.excluded_at_infinity == 1
    assert report.source_indices == (1,)


def test_measure_frame_rejects_size_mismatch():
    cal = identity_calibration(width=640, height=480)
    rec = record([person(0, 0, 10, 60)], width=1280, height=720)
    with pytest.raises(dist.CalibrationMismatch):
        dist.measure_frame(rec, cal)


def test_report_json_line_rounds_to_centimeters():
    cal = identity_calibration()
    rec = record([person(0, 0, 10.1234, 60), person(13, 0, 10, 60)], frame=3, ts_ms=99)
    report = dist.measure_frame(rec, cal)
    line = dist.report_to_json_line(report)
    obj = json.loads(line)
    assert obj["camera_id"] == "cam1" and obj["frame"] == 3 and obj["ts_ms"] == 99
    assert obj["matrix"][0][1] == round(float(report.matrix.values[0, 1]), 2)
    assert obj["violations"][0]["distance_cm"] == obj["matrix"][0][1]
    assert obj["positions"][0][1] == [10.12, 60.0]
    assert obj["excluded_at_infinity"] == 0
