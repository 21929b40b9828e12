"""Scoring detections: IoU, CIoU, NMS, matching, AP, and the full report.

A small synthetic scene makes every stage visible: duplicate boxes get
suppressed, a misplaced detection turns into a false positive, a missed
object shows up as recall loss, and the report table carries per-class
precision / recall / AP@0.5 plus an overall row.
"""

import numpy as np

from gaanet import Detection, GroundTruth, ciou, evaluate, iou, nms

names = ["bird", "drone", "helicopter", "plane"]

print("box overlap measures")
a, b = (10, 10, 50, 50), (30, 30, 70, 70)
print(f"  iou  {a} vs {b}: {iou(a, b):.4f}")
print(f"  ciou {a} vs {b}: {ciou(a, b):.4f}  (center distance penalized)")
print(f"  ciou of identical boxes: {ciou(a, a):.4f}")

# duplicate suppression
dets = [
    Detection(box=(10, 10, 50, 50), class_id=1, confidence=0.92),
    Detection(box=(12, 11, 52, 49), class_id=1, confidence=0.81),  # duplicate
    Detection(box=(60, 60, 90, 95), class_id=0, confidence=0.75),
]
kept = nms(dets, 0.45)
print(f"\nNMS kept {len(kept)} of {len(dets)} detections")

# two images: one clean hit, one duplicate + one miss + one false positive
gts = {
    "night1": [GroundTruth(box=(10, 10, 50, 50), class_id=1)],
    "night2": [
        GroundTruth(box=(20, 20, 60, 60), class_id=0),
        GroundTruth(box=(100, 100, 140, 150), class_id=3),  # never detected
    ],
}
preds = {
    "night1": [Detection(box=(11, 10, 51, 50), class_id=1, confidence=0.9)],
    "night2": [
        Detection(box=(21, 20, 61, 61), class_id=0, confidence=0.85),
        Detection(box=(200, 20, 240, 60), class_id=0, confidence=0.4),  # FP
    ],
}

report = evaluate(preds, gts, names)
print()
print(report.format_table())

print("\nnormalized confusion (rows: predicted incl. background, cols: truth)")
with np.printoptions(precision=2, suppress=True):
    print(report.confusion)
