"""
Scoring detectors and classifiers: AUROC, precision/recall, IoU, and AP
=======================================================================

The evaluation toolkit in one sitting, on data small enough to check by
hand.  These are the numbers quoted when someone asks "how good is the
mask classifier" or "how good is the person detector".
"""

from safewatch.ingest import BoundingBox
from safewatch.metrics import (
    EvalDetection,
    GroundTruthBox,
    ScoredSample,
    auroc,
    average_precision,
    confusion_from_scores,
    iou,
    mean_average_precision,
    precision_recall,
)

# --- Ranking quality -------------------------------------------------------
# AUROC is the probability that a random positive outscores a random
# negative (ties count half).  Four samples, four comparable pairs:
# 0.9>0.5, 0.9>0.1, 0.4<0.5, 0.4>0.1 — three of four, so 0.75.
samples = [
    ScoredSample(0.9, 1),
    ScoredSample(0.4, 1),
    ScoredSample(0.5, 0),
    ScoredSample(0.1, 0),
]
print(f"AUROC: {auroc(samples):.4f}")

# --- Thresholded quality ---------------------------------------------------
# Pick an operating point and the same scores become a confusion matrix.
counts = confusion_from_scores(samples, threshold=0.5)
p, r = precision_recall(counts)
print(f"at threshold 0.5: tp={counts.tp} fp={counts.fp} fn={counts.fn} tn={counts.tn}")
print(f"precision {p:.4f}, recall {r:.4f}")

# --- Box overlap -----------------------------------------------------------
# Two 2x2 boxes offset by half a width share a 1x2 strip: intersection 2,
# union 6, IoU exactly one third.
a = BoundingBox(0, 0, 2, 2)
b = BoundingBox(1, 0, 2, 2)
print(f"IoU of half-overlapping squares: {iou(a, b):.4f}")

# --- Detector quality ------------------------------------------------------
# Average precision walks detections in confidence order, matching each
# greedily to an unclaimed ground-truth box at IoU >= 0.5.  Here the
# middle detection is a false positive, which dents the precision
# envelope: AP = 5/6, not 1.
gts = [
    GroundTruthBox("img", BoundingBox(0, 0, 10, 10)),
    GroundTruthBox("img", BoundingBox(100, 100, 10, 10)),
]
dets = [
    EvalDetection("img", BoundingBox(0, 0, 10, 10), 0.9),
    EvalDetection("img", BoundingBox(50, 50, 10, 10), 0.8),
    EvalDetection("img", BoundingBox(100, 100, 10, 10), 0.7),
]
print(f"AP with one false positive: {average_precision(dets, gts, 0.5):.4f}")

# mAP is the same thing averaged over classes.
gts_two_cls = gts + [GroundTruthBox("img", BoundingBox(200, 200, 10, 10), cls="cart")]
dets_two_cls = dets + [EvalDetection("img", BoundingBox(200, 200, 10, 10), 0.6, cls="cart")]
per_class, mean = mean_average_precision(dets_two_cls, gts_two_cls, 0.5)
for cls in sorted(per_class):
    print(f"AP[{cls}] = {per_class[cls]:.4f}")
print(f"mAP = {mean:.4f}")
