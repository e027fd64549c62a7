"""Face-crop preparation and the mask/no-mask decision rule.

The classifier itself lives outside this package; these are the pre- and
post-processing rules around it: pad the detector's tight face box before
cropping, skip faces too small to classify reliably, and turn a score into
a decision.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ingest import BoundingBox


class ScoreOutOfRange(Exception):
    """A mask score fell outside [0, 1]."""


@dataclass(frozen=True)
class MaskConfig:
    crop_offset_px: float = 30.0
    min_face_px: float = 90.0
    decision_threshold: float = 0.5


def expand_face_crop(
    box: BoundingBox, frame_width: float, frame_height: float, offset_px: float = 30.0
) -> BoundingBox:
    """Grow the face box by offset_px on every side, clamped to the frame.

    Tight detector boxes cut off chin and ears; classifiers behave better on
    padded crops.
    """
    if offset_px < 0:
        raise ValueError(f"offset must be non-negative, got {offset_px}")
    x0 = max(0.0, box.x_min - offset_px)
    y0 = max(0.0, box.y_min - offset_px)
    x1 = min(float(frame_width), box.x_max + offset_px)
    y1 = min(float(frame_height), box.y_max + offset_px)
    return BoundingBox(x0, y0, x1 - x0, y1 - y0)


def passes_min_size(box: BoundingBox, min_face_px: float = 90.0) -> bool:
    """Both sides must reach min_face_px; exactly at the minimum passes."""
    return box.width >= min_face_px and box.height >= min_face_px


def classify_decision(score: float, threshold: float = 0.5) -> str:
    """'mask' when score >= threshold (ties favor mask), else 'no_mask'."""
    if not 0.0 <= score <= 1.0:
        raise ScoreOutOfRange(f"mask score {score} outside [0, 1]")
    return "mask" if score >= threshold else "no_mask"
