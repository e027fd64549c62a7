"""Ground-plane distance measurement between detected people.

A person's contact with the floor is approximated by the two bottom corners
of their bounding box.  Both corners are pushed through the camera's
calibration homography and the separation between two people is the smallest
of the four corner-to-corner distances, so the measurement reflects the
closest footprint approach rather than box centers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    Calibration,
    Homography,
    PixelPoint,
    PointAtInfinity,
    WorldPoint,
    apply_homography,
)
from .ingest import BoundingBox, DetectionRecord, FrameMeta

WHO_DISTANCE_CM = 200.0

GroundPair = tuple[WorldPoint, WorldPoint]


class DistancingError(Exception):
    pass


class CalibrationMismatch(DistancingError):
    """Frame dimensions disagree with the calibration they are measured under."""


@dataclass(frozen=True)
class MonitorConfig:
    """Distance threshold (strict) and the detector confidence floor."""

    threshold_cm: float = WHO_DISTANCE_CM
    min_confidence: float = 0.5


@dataclass(frozen=True)
class Violation:
    i: int
    j: int
    distance_cm: float


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric pairwise distances in cm with a zero diagonal."""

    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FrameReport:
    """Distances and violations for one frame.

    positions/track_ids are aligned with the matrix rows; source_indices maps
    each row back to the detection's index in the original record so callers
    can correlate with the raw stream.
    """

    meta: FrameMeta
    positions: tuple[GroundPair, ...]
    source_indices: tuple[int, ...]
    track_ids: tuple[int | None, ...]
    matrix: DistanceMatrix
    violations: tuple[Violation, ...]
    excluded_at_infinity: int = 0


def ground_points(box: BoundingBox) -> tuple[PixelPoint, PixelPoint]:
    """Bottom-left and bottom-right corners, the feet of the detection."""
    return (
        PixelPoint(box.x_min, box.y_max),
        PixelPoint(box.x_max, box.y_max),
    )


def euclidean(p, q) -> float:
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.sqrt(dx * dx + dy * dy)


def pair_distance(a: GroundPair, b: GroundPair) -> float:
    """Closest approach between two footprints: min over the four corner pairs."""
    return min(
        euclidean(a[0], b[0]),
        euclidean(a[0], b[1]),
        euclidean(a[1], b[0]),
        euclidean(a[1], b[1]),
    )


def probe_distance(h: Homography, a: Sequence[float], b: Sequence[float]) -> float:
    """Floor distance in cm between two image points mapped through h.

    The single measurement path shared by the CLI and the HTTP API, so both
    report bit-identical numbers for identical inputs.
    """
    return euclidean(apply_homography(h, a), apply_homography(h, b))


def distance_matrix(pairs: list[GroundPair] | tuple[GroundPair, ...]) -> DistanceMatrix:
    n = len(pairs)
    values = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = pair_distance(pairs[i], pairs[j])
            values[i, j] = d
            values[j, i] = d
    return DistanceMatrix(values)


def find_violations(matrix: DistanceMatrix, threshold_cm: float = WHO_DISTANCE_CM) -> list[Violation]:
    """Pairs strictly closer than the threshold; exactly-at-threshold is compliant."""
    out = []
    for i in range(matrix.n):
        for j in range(i + 1, matrix.n):
            d = float(matrix.values[i, j])
            if d < threshold_cm:
                out.append(Violation(i, j, d))
    return out


def measure_frame(
    rec: DetectionRecord, cal: Calibration, cfg: MonitorConfig = MonitorConfig()
) -> FrameReport:
    """Project one frame's person detections to the floor and measure them.

    Detections below the confidence floor or of other classes are ignored.
    A detection whose footprint maps to infinity (on the horizon line of the
    homography) cannot be placed on the floor; it is excluded and counted.
    """
    if rec.meta.width != cal.image_width or rec.meta.height != cal.image_height:
        raise CalibrationMismatch(
            f"frame is {rec.meta.width}x{rec.meta.height} but calibration "
            f"'{cal.camera_id}' expects {cal.image_width}x{cal.image_height}"
        )
    positions: list[GroundPair] = []
    source_indices: list[int] = []
    track_ids: list[int | None] = []
    excluded = 0
    for idx, det in enumerate(rec.detections):
        if det.cls != "person" or det.confidence < cfg.min_confidence:
            continue
        left_px, right_px = ground_points(det.box)
        try:
            pair = (
                apply_homography(cal.homography, left_px),
                apply_homography(cal.homography, right_px),
            )
        except PointAtInfinity:
            excluded += 1
            continue
        positions.append(pair)
        source_indices.append(idx)
        track_ids.append(det.track_id)
    matrix = distance_matrix(positions)
    violations = find_violations(matrix, cfg.threshold_cm)
    return FrameReport(
        meta=rec.meta,
        positions=tuple(positions),
        source_indices=tuple(source_indices),
        track_ids=tuple(track_ids),
        matrix=matrix,
        violations=tuple(violations),
        excluded_at_infinity=excluded,
    )


def report_to_json_line(report: FrameReport) -> str:
    """FrameReport as one JSON line, distances rounded to whole 0.01 cm."""
    return json.dumps(
        {
            "camera_id": report.meta.camera_id,
            "frame": report.meta.frame_index,
            "ts_ms": report.meta.ts_ms,
            "positions": [
                [[round(p.x, 2), round(p.y, 2)] for p in pair] for pair in report.positions
            ],
            "source_indices": list(report.source_indices),
            "track_ids": list(report.track_ids),
            "matrix": [[round(float(v), 2) for v in row] for row in report.matrix.values],
            "violations": [
                {"i": v.i, "j": v.j, "distance_cm": round(v.distance_cm, 2)}
                for v in report.violations
            ],
            "excluded_at_infinity": report.excluded_at_infinity,
        },
        separators=(",", ":"),
    )
