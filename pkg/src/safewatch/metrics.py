"""Evaluation metrics for the upstream detector and mask classifier.

Nothing here runs a model; these score saved predictions against labels so
deployments can sanity-check a detector on their own footage before trusting
the monitor built on top of it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import BoundingBox, parse_detection_line


class MetricsError(Exception):
    pass


class DegenerateLabels(MetricsError):
    """Ranking metrics need at least one positive and one negative."""


class UndefinedMetric(MetricsError):
    """A ratio with a zero denominator was requested."""


class NoGroundTruth(MetricsError):
    """Average precision is meaningless without any ground-truth boxes."""


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: int  # 1 positive, 0 negative


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalDetection:
    image_id: str
    box: BoundingBox
    confidence: float
    cls: str = "person"


@dataclass(frozen=True)
class GroundTruthBox:
    image_id: str
    box: BoundingBox
    cls: str = "person"


# ---------------------------------------------------------------------------
# Ranking.


def auroc(samples: list[ScoredSample] | tuple[ScoredSample, ...]) -> float:
    """Area under the ROC curve by rank sum; tied scores earn half credit.

    Equivalent to the probability that a random positive outscores a random
    negative, with ties counting 1/2.
    """
    scores = np.array([s.score for s in samples], dtype=np.float64)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"need both classes, got {n_pos} positive / {n_neg} negative")

    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size, dtype=np.float64)
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank across the tie run
        i = j + 1

    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# ---------------------------------------------------------------------------
# Thresholded classification.


def confusion_from_scores(
    samples: list[ScoredSample] | tuple[ScoredSample, ...], threshold: float
) -> ConfusionCounts:
    """Counts with 'predicted positive' meaning score >= threshold."""
    tp = fp = tn = fn = 0
    for s in samples:
        predicted = s.score >= threshold
        if predicted and s.label == 1:
            tp += 1
        elif predicted:
            fp += 1
        elif s.label == 1:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp == 0:
        raise UndefinedMetric("precision undefined: no predicted positives")
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise UndefinedMetric("recall undefined: no actual positives")
    return c.tp / (c.tp + c.fn)


def precision_recall(c: ConfusionCounts) -> tuple[float | None, float | None]:
    """Both ratios at once; an undefined side comes back as None, never 0."""
    try:
        p = precision(c)
    except UndefinedMetric:
        p = None
    try:
        r = recall(c)
    except UndefinedMetric:
        r = None
    return p, r


# ---------------------------------------------------------------------------
# Detection matching.


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; disjoint boxes score 0."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.width * a.height + b.width * b.height - inter
    return inter / union


def _greedy_tp_flags(
    detections: list[EvalDetection], ground_truths: list[GroundTruthBox], iou_threshold: float
) -> list[bool]:
    """TP/FP flags in descending-confidence order (stable on ties).

    Each detection claims its best-IoU unmatched ground truth in the same
    image; equal IoU goes to the lowest ground-truth index; a claim counts as
    a true positive only when that IoU reaches the threshold.
    """
    gt_by_image: dict[str, list[int]] = {}
    for gi, gt in enumerate(ground_truths):
        gt_by_image.setdefault(gt.image_id, []).append(gi)

    order = sorted(range(len(detections)), key=lambda k: (-detections[k].confidence, k))
    matched: set[int] = set()
    flags = []
    for k in order:
        det = detections[k]
        best_iou = 0.0
        best_gi = None
        for gi in gt_by_image.get(det.image_id, []):
            if gi in matched:
                continue
            v = iou(det.box, ground_truths[gi].box)
            if v > best_iou:  # strict: ties keep the earlier (lower) index
                best_iou = v
                best_gi = gi
        if best_gi is not None and best_iou >= iou_threshold:
            matched.add(best_gi)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(
    detections: list[EvalDetection],
    ground_truths: list[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> float:
    """All-point interpolated AP under greedy confidence-ordered matching."""
    if not ground_truths:
        raise NoGroundTruth("cannot evaluate without ground-truth boxes")
    if not detections:
        return 0.0
    flags = _greedy_tp_flags(detections, ground_truths, iou_threshold)
    n_gt = len(ground_truths)
    tp_cum = np.cumsum([1 if f else 0 for f in flags])
    fp_cum = np.cumsum([0 if f else 1 for f in flags])
    recalls = tp_cum / n_gt
    precisions = tp_cum / (tp_cum + fp_cum)

    # Precision envelope: each point becomes the max precision at any recall
    # at or beyond it, then AP integrates the envelope over recall.
    envelope = precisions.copy()
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, envelope):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return float(ap)


def mean_average_precision(
    detections: list[EvalDetection],
    ground_truths: list[GroundTruthBox],
    iou_threshold: float = 0.5,
) -> tuple[dict[str, float], float]:
    """Per-class AP over the classes present in ground truth, plus their mean."""
    if not ground_truths:
        raise NoGroundTruth("cannot evaluate without ground-truth boxes")
    classes = sorted({gt.cls for gt in ground_truths})
    per_class = {}
    for cls in classes:
        dets = [d for d in detections if d.cls == cls]
        gts = [g for g in ground_truths if g.cls == cls]
        per_class[cls] = average_precision(dets, gts, iou_threshold)
    return per_class, sum(per_class.values()) / len(classes)


# ---------------------------------------------------------------------------
# File loaders for the eval command.


def load_scored_csv(path: str | Path) -> list[ScoredSample]:
    """Read 'score,label' rows; a header line is allowed and skipped."""
    samples = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            try:
                score = float(row[0])
            except ValueError:
                continue  # header
            label = int(row[1])
            if label not in (0, 1):
                raise MetricsError(f"label must be 0 or 1, got {row[1]}")
            samples.append(ScoredSample(score, label))
    return samples


def load_detections_jsonl(path: str | Path) -> list[EvalDetection]:
    """Flatten detection-stream JSONL; image ids become 'camera_id:frame'."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = parse_detection_line(line)
            image_id = f"{rec.meta.camera_id}:{rec.meta.frame_index}"
            for det in rec.detections:
                out.append(EvalDetection(image_id, det.box, det.confidence, det.cls))
    return out


def load_ground_truth_jsonl(path: str | Path) -> list[GroundTruthBox]:
    """Read ground truth lines: {"image_id", "x_min", "y_min", "width", "height"}."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            box = BoundingBox(
                float(obj["x_min"]), float(obj["y_min"]), float(obj["width"]), float(obj["height"])
            )
            out.append(GroundTruthBox(str(obj["image_id"]), box, str(obj.get("class", "person"))))
    return out
