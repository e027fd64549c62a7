"""Synthetic reference frames for calibrating against known geometry.

Renders a floor grid of known tile size as seen by the built-in overhead
camera and writes a manifest with the exact pixel coordinates of the floor
rectangle's corners and of one adjacent pair of tile corners.  Clicking (or
posting) those pixels against the calibration API must recover the declared
geometry, which makes the fixture a ground truth for both the HTTP service
and the browser console.
"""

from __future__ import annotations

import json
from pathlib import Path

from PIL import Image, ImageDraw

from .geometry import Calibration, apply_homography, invert_homography
from .pipeline import overhead_calibration

BACKGROUND = (244, 242, 238)
GRID_LINE = (120, 126, 134)
BORDER_LINE = (32, 90, 167)


def render_grid_frame(cal: Calibration, tile_cm: float = 30.0) -> Image.Image:
    """Draw the calibrated floor rectangle's tile grid as the camera sees it.

    Straight floor lines stay straight under the homography, so each grid
    line is drawn from its two projected endpoints.
    """
    if tile_cm <= 0:
        raise ValueError("tile size must be positive")
    to_image = invert_homography(cal.homography)
    width_cm = cal.quad.world_width_cm
    depth_cm = cal.quad.world_height_cm

    img = Image.new("RGB", (cal.image_width, cal.image_height), BACKGROUND)
    draw = ImageDraw.Draw(img)

    def px(x_cm: float, y_cm: float) -> tuple[float, float]:
        p = apply_homography(to_image, (x_cm, y_cm))
        return (p.x, p.y)

    x = tile_cm
    while x < width_cm:
        draw.line([px(x, 0.0), px(x, depth_cm)], fill=GRID_LINE, width=1)
        x += tile_cm
    y = tile_cm
    while y < depth_cm:
        draw.line([px(0.0, y), px(width_cm, y)], fill=GRID_LINE, width=1)
        y += tile_cm

    corners = [px(0, 0), px(width_cm, 0), px(width_cm, depth_cm), px(0, depth_cm)]
    draw.polygon(corners, outline=BORDER_LINE, width=2)
    return img


def grid_probe_points(cal: Calibration, tile_cm: float) -> tuple[dict, dict]:
    """Two adjacent tile corners near the floor center, in floor cm and px."""
    to_image = invert_homography(cal.homography)
    width_cm = cal.quad.world_width_cm
    depth_cm = cal.quad.world_height_cm
    # snap the center to the grid, keeping the second corner inside the rect
    gx = min(max(round(width_cm / 2.0 / tile_cm) * tile_cm, 0.0), width_cm - tile_cm)
    gy = min(round(depth_cm / 2.0 / tile_cm) * tile_cm, depth_cm)
    a_cm, b_cm = (gx, gy), (gx + tile_cm, gy)
    a_px = apply_homography(to_image, a_cm)
    b_px = apply_homography(to_image, b_cm)
    return (
        {"floor_cm": list(a_cm), "pixel": [a_px.x, a_px.y]},
        {"floor_cm": list(b_cm), "pixel": [b_px.x, b_px.y]},
    )


def write_grid_fixture(
    frames_dir: str | Path,
    camera_id: str = "cam-grid",
    tile_cm: float = 30.0,
    **camera_kwargs,
) -> dict:
    """Write {camera_id}.png and {camera_id}.manifest.json; return the manifest.

    The manifest carries everything a client needs to exercise calibration
    against known geometry: exact corner pixels of the floor rectangle, its
    size in cm, and one tile-length probe pair whose true separation is
    tile_cm.
    """
    frames_dir = Path(frames_dir)
    frames_dir.mkdir(parents=True, exist_ok=True)
    cal = overhead_calibration(camera_id, **camera_kwargs)
    render_grid_frame(cal, tile_cm).save(frames_dir / f"{camera_id}.png")
    probe_a, probe_b = grid_probe_points(cal, tile_cm)
    manifest = {
        "camera_id": camera_id,
        "image_size": [cal.image_width, cal.image_height],
        "world_rect_cm": [cal.quad.world_width_cm, cal.quad.world_height_cm],
        "tile_cm": tile_cm,
        "corner_pixels": [[p.x, p.y] for p in cal.quad.image_points],
        "probe_a": probe_a,
        "probe_b": probe_b,
    }
    (frames_dir / f"{camera_id}.manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n"
    )
    return manifest
