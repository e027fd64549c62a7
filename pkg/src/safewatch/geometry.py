"""Projective geometry mapping camera pixels onto a metric ground plane.

The ground plane is calibrated from a single quadrilateral: the operator marks
the four corners of a rectangle of known physical size (top-left, top-right,
bottom-right, bottom-left as seen in the image) and the resulting homography
converts pixel coordinates into centimeters on the floor.

Coordinate conventions, used everywhere in this package:
  * pixel coordinates: x grows right, y grows down, origin at the top-left
    corner of the frame;
  * world coordinates: centimeters on the ground plane, the corner of the
    calibration rectangle that appears top-left in the image is (0, 0), its
    top edge runs along +x and its left edge along +y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

# Shared numeric guards.  Distances are centimeters, pixels are pixels; both
# live comfortably above these scales for any real camera.
DET_EPS = 1e-12
W_EPS = 1e-12
PIVOT_EPS = 1e-10
COLLINEAR_AREA_PX2 = 1.0
CALIBRATION_RESIDUAL_CM = 1e-6


class GeometryError(Exception):
    """Base class for geometry failures."""


class DegenerateProjection(GeometryError):
    """A 3-space point lies on the projection plane (f - r is ~0)."""


class DegenerateHomography(GeometryError):
    """A composed or supplied matrix is numerically singular."""


class DegenerateConfiguration(GeometryError):
    """Point correspondences do not determine a homography."""


class PointAtInfinity(GeometryError):
    """A mapped point has a vanishing homogeneous w component."""


class SingularMatrix(GeometryError):
    """Matrix inversion was requested for a singular matrix."""


class PixelPoint(NamedTuple):
    x: float
    y: float


class WorldPoint(NamedTuple):
    """A point on the ground plane, in centimeters."""

    x: float
    y: float


@dataclass(frozen=True)
class CameraModel:
    """Parameters of the tilted-camera model used for top-view synthesis.

    phi is the camera tilt in radians, f the focal length in pixels and
    s_x / s_y anisotropic scale factors of the rectified view.
    """

    phi: float
    f: float
    s_x: float = 1.0
    s_y: float = 1.0
    image_width: int = 1280
    image_height: int = 720

    def __post_init__(self) -> None:
        if not abs(self.phi) < math.pi / 2:
            raise ValueError(f"tilt must satisfy |phi| < pi/2, got {self.phi}")
        if self.f <= 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if self.s_x <= 0 or self.s_y <= 0:
            raise ValueError("scale factors must be positive")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")


@dataclass(frozen=True)
class Homography:
    """A normalized 3x3 projective map.

    Matrices are stored with m[2][2] == 1 whenever that entry is usable;
    otherwise they are scaled to unit Frobenius norm and `frobenius_scaled`
    is set so callers know the usual scale convention did not apply.
    """

    m: np.ndarray
    frobenius_scaled: bool = False

    def __post_init__(self) -> None:
        mat = np.asarray(self.m, dtype=np.float64)
        if mat.shape != (3, 3):
            raise DegenerateHomography(f"expected a 3x3 matrix, got shape {mat.shape}")
        if abs(float(np.linalg.det(mat))) <= DET_EPS:
            raise DegenerateHomography("matrix determinant is below 1e-12")
        object.__setattr__(self, "m", mat)

    @classmethod
    def normalized(cls, matrix: np.ndarray) -> "Homography":
        """Scale a raw matrix into the canonical form described above."""
        mat = np.asarray(matrix, dtype=np.float64)
        if mat.shape != (3, 3):
            raise DegenerateHomography(f"expected a 3x3 matrix, got shape {mat.shape}")
        if abs(mat[2, 2]) > 1e-12:
            return cls(mat / mat[2, 2])
        norm = float(np.linalg.norm(mat))
        if norm <= DET_EPS:
            raise DegenerateHomography("cannot normalize an all-zero matrix")
        # Unit norm within rounding already: dividing again would only churn
        # the last ulp, so normalization stays idempotent.
        if abs(norm - 1.0) <= 4 * np.finfo(np.float64).eps:
            return cls(mat, frobenius_scaled=True)
        return cls(mat / norm, frobenius_scaled=True)

    def as_rows(self) -> list[list[float]]:
        return [[float(v) for v in row] for row in self.m]


@dataclass(frozen=True)
class QuadViolation:
    """One reason a calibration quad was rejected; indices are point indices."""

    kind: str
    indices: tuple[int, ...]
    message: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "indices": list(self.indices), "message": self.message}


@dataclass(frozen=True)
class CalibrationQuad:
    """Four marked image corners of a world rectangle of known size.

    Points are ordered top-left, top-right, bottom-right, bottom-left as the
    rectangle appears in the image; world_width/world_height are the physical
    edge lengths in centimeters (top/bottom and left/right edges).
    """

    image_points: tuple[PixelPoint, PixelPoint, PixelPoint, PixelPoint]
    world_width_cm: float
    world_height_cm: float

    def world_corners(self) -> tuple[WorldPoint, WorldPoint, WorldPoint, WorldPoint]:
        w, h = self.world_width_cm, self.world_height_cm
        return (WorldPoint(0.0, 0.0), WorldPoint(w, 0.0), WorldPoint(w, h), WorldPoint(0.0, h))


@dataclass(frozen=True)
class Calibration:
    """A stored per-camera calibration: the quad plus the fitted homography.

    `homography` maps image pixels to world centimeters.
    """

    camera_id: str
    image_width: int
    image_height: int
    quad: CalibrationQuad
    homography: Homography
    created_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())


def translate_center(p: Sequence[float], width: float, height: float) -> tuple[float, float]:
    """Shift pixel coordinates so the frame center becomes the origin."""
    return (p[0] - width / 2.0, p[1] - height / 2.0)


def rotation_scaling_matrix(cam: CameraModel) -> np.ndarray:
    """Rotation-and-scale stage of the top-view model, as a 3x3 on (X, Y, 0)."""
    c = math.cos(cam.phi)
    s = math.sin(cam.phi)
    return np.array(
        [
            [cam.s_x * c, 0.0, -s],
            [0.0, cam.s_y, 0.0],
            [s, 0.0, c],
        ],
        dtype=np.float64,
    )


def project_to_image(p3d: Sequence[float], cam: CameraModel) -> PixelPoint:
    """Perspective-divide a rotated 3-space point back onto the image plane."""
    p, q, r = float(p3d[0]), float(p3d[1]), float(p3d[2])
    denom = cam.f - r
    if abs(denom) <= 1e-12:
        raise DegenerateProjection(f"point with r={r} lies on the projection plane (f={cam.f})")
    u = cam.f * p / denom + cam.image_width / 2.0
    v = cam.f * q / denom + cam.image_height / 2.0
    return PixelPoint(u, v)


def analytic_homography(cam: CameraModel) -> Homography:
    """Fold translate -> rotate/scale -> project into one matrix on pixels.

    Applying the result to a pixel is identical (to rounding) to running the
    three stages one after another, with the source pixel lifted onto the
    z = 0 plane between translation and rotation.
    """
    w2 = cam.image_width / 2.0
    h2 = cam.image_height / 2.0
    r = rotation_scaling_matrix(cam)
    # Lift (X, Y, 1) to the 3-space point (X, Y, 0): the third column of the
    # rotation never contributes.
    rt = r @ np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0.0]])
    row_w = np.array([-rt[2, 0], -rt[2, 1], cam.f - rt[2, 2]])
    row_u = cam.f * rt[0] + w2 * row_w
    row_v = cam.f * rt[1] + h2 * row_w
    center = np.array([[1.0, 0, -w2], [0, 1.0, -h2], [0, 0, 1.0]])
    composed = np.vstack([row_u, row_v, row_w]) @ center
    try:
        return Homography.normalized(composed)
    except DegenerateHomography as exc:
        raise DegenerateHomography(f"camera model composes to a singular map: {exc}") from exc


def apply_homography(h: Homography, p: Sequence[float]) -> WorldPoint:
    """Map one point through h, raising PointAtInfinity on vanishing w."""
    m = h.m
    x, y = float(p[0]), float(p[1])
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= W_EPS:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity (w={w})")
    u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
    v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
    return WorldPoint(u, v)


def apply_homography_many(h: Homography, points: np.ndarray) -> np.ndarray:
    """Vectorized apply_homography for an (n, 2) array of points.

    Spelled out elementwise (no matmul) so each row rounds exactly like the
    scalar path.
    """
    pts = np.asarray(points, dtype=np.float64)
    m = h.m
    x = pts[:, 0]
    y = pts[:, 1]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if np.any(np.abs(w) <= W_EPS):
        bad = int(np.argmin(np.abs(w)))
        raise PointAtInfinity(f"point index {bad} maps to infinity")
    u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w
    v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w
    return np.column_stack([u, v])


def invert_homography(h: Homography) -> Homography:
    """Return the normalized inverse map."""
    det = float(np.linalg.det(h.m))
    if abs(det) <= DET_EPS:
        raise SingularMatrix(f"determinant {det} is too small to invert")
    return Homography.normalized(np.linalg.inv(h.m))


def _triangle_area(a: Sequence[float], b: Sequence[float], c: Sequence[float]) -> float:
    return abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) / 2.0


def _solve_gepp(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; small pivots are fatal."""
    n = b.shape[0]
    aug = np.hstack([a.astype(np.float64, copy=True), b.reshape(-1, 1).astype(np.float64)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) < PIVOT_EPS:
            raise DegenerateConfiguration(
                f"linear system is singular (pivot {abs(pivot):.3e} below {PIVOT_EPS:g})"
            )
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        factors = aug[col + 1 :, col] / aug[col, col]
        aug[col + 1 :, col:] -= np.outer(factors, aug[col, col:])
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (aug[i, -1] - aug[i, i + 1 : n] @ x[i + 1 :]) / aug[i, i]
    return x


def _conditioning_transform(points: np.ndarray) -> np.ndarray:
    """Similarity that centers points and scales mean radius to sqrt(2).

    Conditioning keeps the 8x8 system entries near unit magnitude, which both
    preserves solution accuracy for far-flung quads and makes the pivot
    threshold meaningful independent of image resolution or rectangle size.
    """
    centroid = points.mean(axis=0)
    mean_dist = float(np.mean(np.linalg.norm(points - centroid, axis=1)))
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _check_not_collinear(points: np.ndarray, label: str) -> None:
    """Reject collinear triples in conditioned coordinates.

    Points arriving here are centered and scaled to mean radius sqrt(2), so
    the area threshold is unit-free; genuinely collinear inputs land at zero.
    """
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                area = _triangle_area(points[i], points[j], points[k])
                if area <= 1e-9:
                    raise DegenerateConfiguration(
                        f"{label} points {i}, {j}, {k} are collinear (conditioned area {area:.3g})"
                    )


def homography_from_correspondences(
    src: Sequence[Sequence[float]], dst: Sequence[Sequence[float]]
) -> Homography:
    """Fit the homography taking four src points onto four dst points.

    Solves the standard 8-unknown direct linear system, two equations per
    correspondence, with the last matrix entry fixed to 1.  Both point sets
    are conditioned (centered, scaled) before the solve and the result is
    verified to reproduce every correspondence to sub-nanometer residual.
    """
    src_pts = np.asarray(src, dtype=np.float64)
    dst_pts = np.asarray(dst, dtype=np.float64)
    if src_pts.shape != (4, 2) or dst_pts.shape != (4, 2):
        raise DegenerateConfiguration("exactly four 2-d points are required on each side")

    t_src = _conditioning_transform(src_pts)
    t_dst = _conditioning_transform(dst_pts)
    sc = (np.hstack([src_pts, np.ones((4, 1))]) @ t_src.T)[:, :2]
    dc = (np.hstack([dst_pts, np.ones((4, 1))]) @ t_dst.T)[:, :2]
    _check_not_collinear(sc, "source")
    _check_not_collinear(dc, "destination")

    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = sc[i]
        u, v = dc[i]
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]
        b[2 * i + 1] = v
    h = _solve_gepp(a, b)
    conditioned = np.array(
        [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]
    )
    result = Homography.normalized(np.linalg.inv(t_dst) @ conditioned @ t_src)

    for i in range(4):
        mapped = apply_homography(result, src_pts[i])
        residual = math.hypot(mapped.x - dst_pts[i][0], mapped.y - dst_pts[i][1])
        if residual >= 1e-9:
            raise DegenerateConfiguration(
                f"correspondence {i} reproduces with residual {residual:.3e}"
            )
    return result


def validate_quad(
    quad: CalibrationQuad, image_width: float, image_height: float
) -> list[QuadViolation]:
    """Collect every reason the quad is unusable; empty list means valid."""
    violations: list[QuadViolation] = []
    pts = quad.image_points
    if len(pts) != 4:
        return [QuadViolation("bad_count", (), f"expected 4 points, got {len(pts)}")]
    if quad.world_width_cm <= 0 or quad.world_height_cm <= 0:
        violations.append(
            QuadViolation(
                "nonpositive_rect",
                (),
                f"rectangle must have positive size, got "
                f"{quad.world_width_cm} x {quad.world_height_cm} cm",
            )
        )
    for idx, p in enumerate(pts):
        if not (0 <= p[0] <= image_width and 0 <= p[1] <= image_height):
            violations.append(
                QuadViolation(
                    "out_of_bounds",
                    (idx,),
                    f"point {idx} at ({p[0]:.1f}, {p[1]:.1f}) is outside the "
                    f"{image_width} x {image_height} frame",
                )
            )
    for i in range(4):
        for j in range(i + 1, 4):
            for k in range(j + 1, 4):
                area = _triangle_area(pts[i], pts[j], pts[k])
                if area <= COLLINEAR_AREA_PX2:
                    violations.append(
                        QuadViolation(
                            "collinear",
                            (i, j, k),
                            f"points {i}, {j}, {k} are nearly collinear "
                            f"(triangle area {area:.2f} px^2)",
                        )
                    )
    return violations


class InvalidQuad(GeometryError):
    """Raised when building a calibration from a quad that fails validation."""

    def __init__(self, violations: list[QuadViolation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


def build_calibration(
    camera_id: str, image_width: int, image_height: int, quad: CalibrationQuad
) -> Calibration:
    """Fit and package the pixel-to-centimeter map for one camera."""
    violations = validate_quad(quad, image_width, image_height)
    if violations:
        raise InvalidQuad(violations)
    homography = homography_from_correspondences(quad.image_points, quad.world_corners())
    for src, dst in zip(quad.image_points, quad.world_corners()):
        got = apply_homography(homography, src)
        residual = math.hypot(got.x - dst.x, got.y - dst.y)
        if residual >= CALIBRATION_RESIDUAL_CM:
            raise DegenerateConfiguration(
                f"calibration corner residual {residual:.3e} cm exceeds "
                f"{CALIBRATION_RESIDUAL_CM:g} cm"
            )
    return Calibration(
        camera_id=camera_id,
        image_width=image_width,
        image_height=image_height,
        quad=quad,
        homography=homography,
    )


def edge_report(cal: Calibration) -> tuple[list[float], list[float]]:
    """Recovered edge lengths (cm) and percent errors versus the declared rect.

    Edges are ordered top, right, bottom, left.  With four exact
    correspondences the fit interpolates the corners, so these errors reflect
    solver conditioning rather than click accuracy; they blow up only when
    the quad is close to degenerate.
    """
    corners = [apply_homography(cal.homography, p) for p in cal.quad.image_points]
    declared = [
        cal.quad.world_width_cm,
        cal.quad.world_height_cm,
        cal.quad.world_width_cm,
        cal.quad.world_height_cm,
    ]
    lengths = []
    for i in range(4):
        a = corners[i]
        b = corners[(i + 1) % 4]
        lengths.append(math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2))
    errors = [abs(l - d) / d * 100.0 for l, d in zip(lengths, declared)]
    return lengths, errors


def calibration_to_dict(cal: Calibration) -> dict:
    return {
        "camera_id": cal.camera_id,
        "image_width": cal.image_width,
        "image_height": cal.image_height,
        "image_points": [[float(p.x), float(p.y)] for p in cal.quad.image_points],
        "world_rect_cm": [cal.quad.world_width_cm, cal.quad.world_height_cm],
        "homography": cal.homography.as_rows(),
        "created_at": cal.created_at,
    }


def calibration_from_dict(data: dict) -> Calibration:
    points = tuple(PixelPoint(float(x), float(y)) for x, y in data["image_points"])
    if len(points) != 4:
        raise ValueError(f"calibration must list 4 image points, got {len(points)}")
    rect = data["world_rect_cm"]
    quad = CalibrationQuad(points, float(rect[0]), float(rect[1]))
    return Calibration(
        camera_id=str(data["camera_id"]),
        image_width=int(data["image_width"]),
        image_height=int(data["image_height"]),
        quad=quad,
        homography=Homography.normalized(np.array(data["homography"], dtype=np.float64)),
        created_at=str(data["created_at"]),
    )


def save_calibration(cal: Calibration, path: str | Path) -> None:
    Path(path).write_text(json.dumps(calibration_to_dict(cal), indent=2) + "\n")


def load_calibration(path: str | Path) -> Calibration:
    return calibration_from_dict(json.loads(Path(path).read_text()))
