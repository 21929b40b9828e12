"""Detection-quality mathematics.

Boxes are pixel-space corner tuples (x1, y1, x2, y2). The pipeline is the
usual one-stage tooling: per-class greedy NMS, confidence-greedy TP
matching at IoU 0.5, all-point interpolated average precision, and a
per-class report with an operating point chosen at the confidence that
maximizes the class-mean F1 score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

EPS = 1e-9


# ---------------------------------------------------------------------------
# boxes and IoU family


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]
    class_id: int
    confidence: float

    def __post_init__(self):
        x1, y1, x2, y2 = self.box
        if not (x2 > x1 and y2 > y1):
            raise DataError(f"degenerate detection box {self.box}")
        if not math.isfinite(self.confidence):
            raise DataError("detection confidence must be finite")


@dataclass(frozen=True)
class GroundTruth:
    box: tuple[float, float, float, float]
    class_id: int


def iou(a, b) -> float:
    """Intersection over union; 0 for disjoint or zero-area boxes."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return float(inter / union)


def ciou(a, b) -> float:
    """IoU penalized by normalized center distance and aspect divergence.

    ``iou - rho^2/c^2 - alpha*v`` where rho is the center distance, c the
    enclosing-box diagonal, and v the squared (4/pi^2-scaled) difference of
    arctan aspect ratios. Zero-dimension boxes contribute an aspect ratio
    of 0; the alpha term is dropped when both v and (1 - IoU) vanish.
    """
    base = iou(a, b)
    acx, acy = (a[0] + a[2]) / 2.0, (a[1] + a[3]) / 2.0
    bcx, bcy = (b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0
    rho2 = (acx - bcx) ** 2 + (acy - bcy) ** 2
    c2 = (max(a[2], b[2]) - min(a[0], b[0])) ** 2 + (
        max(a[3], b[3]) - min(a[1], b[1])
    ) ** 2
    center_term = rho2 / c2 if c2 > 0 else 0.0
    aw, ah = a[2] - a[0], a[3] - a[1]
    bw, bh = b[2] - b[0], b[3] - b[1]
    ra = aw / ah if ah > 0 else 0.0
    rb = bw / bh if bh > 0 else 0.0
    v = (4.0 / math.pi**2) * (math.atan(ra) - math.atan(rb)) ** 2
    if v < EPS and (1.0 - base) < EPS:
        alpha = 0.0
    else:
        alpha = v / ((1.0 - base) + v + EPS)
    return float(base - center_term - alpha * v)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) against (m, 4) corner boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    tl = np.maximum(a[:, None, :2], b[None, :, :2])
    br = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(br - tl, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.clip(a[:, 2] - a[:, 0], 0, None) * np.clip(a[:, 3] - a[:, 1], 0, None)
    area_b = np.clip(b[:, 2] - b[:, 0], 0, None) * np.clip(b[:, 3] - b[:, 1], 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def ciou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise CIoU of (n, 4) against (m, 4) corner boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    base = iou_matrix(a, b)
    ac = (a[:, :2] + a[:, 2:]) / 2.0
    bc = (b[:, :2] + b[:, 2:]) / 2.0
    rho2 = ((ac[:, None, :] - bc[None, :, :]) ** 2).sum(axis=2)
    tl = np.minimum(a[:, None, :2], b[None, :, :2])
    br = np.maximum(a[:, None, 2:], b[None, :, 2:])
    c2 = ((br - tl) ** 2).sum(axis=2)
    center = np.zeros_like(rho2)
    np.divide(rho2, c2, out=center, where=c2 > 0)
    awh = a[:, 2:] - a[:, :2]
    bwh = b[:, 2:] - b[:, :2]
    ra = np.where(awh[:, 1] > 0, awh[:, 0] / np.where(awh[:, 1] > 0, awh[:, 1], 1), 0.0)
    rb = np.where(bwh[:, 1] > 0, bwh[:, 0] / np.where(bwh[:, 1] > 0, bwh[:, 1], 1), 0.0)
    v = (4.0 / math.pi**2) * (
        np.arctan(ra)[:, None] - np.arctan(rb)[None, :]
    ) ** 2
    alpha = v / ((1.0 - base) + v + EPS)
    alpha[(v < EPS) & ((1.0 - base) < EPS)] = 0.0
    return base - center - alpha * v


# ---------------------------------------------------------------------------
# suppression and matching


def _det_order(d: Detection):
    # total order: confidence desc, then x1, then y1 (documented tie-break)
    return (-d.confidence, d.box[0], d.box[1])


def nms(dets: list[Detection], iou_threshold: float = 0.45) -> list[Detection]:
    """Per-class greedy suppression; output is confidence-sorted.

    A candidate survives iff its IoU with every kept same-class detection
    stays at or below the threshold; candidates are visited in the total
    order (confidence desc, x1, y1).
    """
    if len(dets) <= 1:
        return list(dets)
    order = sorted(range(len(dets)), key=lambda i: _det_order(dets[i]))
    boxes = np.array([dets[i].box for i in order], dtype=np.float64)
    classes = np.array([dets[i].class_id for i in order])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    suppressed = np.zeros(len(order), dtype=bool)
    kept: list[Detection] = []
    for i in range(len(order)):
        if suppressed[i]:
            continue
        kept.append(dets[order[i]])
        rest = boxes[i + 1 :]
        iw = np.minimum(boxes[i, 2], rest[:, 2]) - np.maximum(boxes[i, 0], rest[:, 0])
        ih = np.minimum(boxes[i, 3], rest[:, 3]) - np.maximum(boxes[i, 1], rest[:, 1])
        inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
        union = areas[i] + areas[i + 1 :] - inter
        ious = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)
        suppressed[i + 1 :] |= (ious > iou_threshold) & (classes[i + 1 :] == classes[i])
    return kept


def match_predictions(
    dets: list[Detection], gts: list[GroundTruth], iou_threshold: float = 0.5
) -> tuple[list[bool], list[bool]]:
    """Greedy confidence-descending TP assignment.

    A detection is a true positive iff its best-IoU unmatched ground truth
    of the same class reaches the threshold; each ground truth matches at
    most once. Returns (tp flags in det input order, matched flags in gt
    order). Confidence ties keep input order; IoU ties take the lowest
    ground-truth index.
    """
    tp = [False] * len(dets)
    matched = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    for i in order:
        det = dets[i]
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if matched[j] or gt.class_id != det.class_id:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0 and best_iou >= iou_threshold:
            tp[i] = True
            matched[best_j] = True
    return tp, matched


def average_precision(tp_flags, n_gt: int) -> float:
    """All-point interpolated AP from confidence-ordered TP flags."""
    if n_gt < 0:
        raise DataError("n_gt must be non-negative")
    if n_gt == 0:
        return 0.0
    flags = np.asarray(tp_flags, dtype=bool)
    if not len(flags):
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


# ---------------------------------------------------------------------------
# full evaluation


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    ap50: float
    n_gt: int
    n_det: int


@dataclass
class MetricsReport:
    classes: list[ClassMetrics]
    precision: float
    recall: float
    map50: float
    operating_conf: float
    confusion: np.ndarray
    confusion_counts: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def format_table(self) -> str:
        rows = [("Class", "Precision", "Recall", "mAP@0.5")]
        for c in self.classes:
            rows.append(
                (c.name, f"{100*c.precision:.1f}", f"{100*c.recall:.1f}", f"{100*c.ap50:.1f}")
            )
        rows.append(
            (
                "Overall",
                f"{100*self.precision:.1f}",
                f"{100*self.recall:.1f}",
                f"{100*self.map50:.1f}",
            )
        )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        lines.append(f"(operating confidence {self.operating_conf:.4f})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "classes": [
                {
                    "name": c.name,
                    "precision": c.precision,
                    "recall": c.recall,
                    "ap50": c.ap50,
                    "n_gt": c.n_gt,
                    "n_det": c.n_det,
                }
                for c in self.classes
            ],
            "overall": {
                "precision": self.precision,
                "recall": self.recall,
                "map50": self.map50,
            },
            "operating_conf": self.operating_conf,
            "confusion_normalized": self.confusion.tolist(),
            "confusion_counts": self.confusion_counts.tolist(),
        }


def _confusion(dets_by_image, gts_by_image, nc, conf_threshold, iou_threshold):
    """(nc+1)^2 counts; rows are predictions, columns truths, last = background."""
    counts = np.zeros((nc + 1, nc + 1))
    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        dets = [
            d
            for d in dets_by_image.get(image_id, [])
            if d.confidence >= conf_threshold
        ]
        gts = list(gts_by_image.get(image_id, []))
        matched = [False] * len(gts)
        for d in sorted(dets, key=_det_order):
            best_j, best_iou = -1, 0.0
            for j, gt in enumerate(gts):
                if matched[j]:
                    continue
                v = iou(d.box, gt.box)
                if v > best_iou:
                    best_iou, best_j = v, j
            if best_j >= 0 and best_iou >= iou_threshold:
                matched[best_j] = True
                counts[d.class_id, gts[best_j].class_id] += 1
            else:
                counts[d.class_id, nc] += 1
        for j, gt in enumerate(gts):
            if not matched[j]:
                counts[nc, gt.class_id] += 1
    return counts


def evaluate(
    dets_by_image: dict,
    gts_by_image: dict,
    class_names: list[str],
    iou_threshold: float = 0.5,
) -> MetricsReport:
    """Per-class precision/recall/AP@0.5 plus normalized confusion counts.

    Matching runs once per image with all detections; because assignment is
    greedy in descending confidence, the TP flags are valid at every
    confidence cutoff. The reported P/R operating point is the confidence
    maximizing mean F1 over classes with ground truth; overall numbers are
    unweighted means over those classes.
    """
    nc = len(class_names)
    per_class_conf: list[list[float]] = [[] for _ in range(nc)]
    per_class_tp: list[list[bool]] = [[] for _ in range(nc)]
    n_gt = np.zeros(nc, dtype=int)

    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        dets = list(dets_by_image.get(image_id, []))
        gts = list(gts_by_image.get(image_id, []))
        for d in dets:
            if not 0 <= d.class_id < nc:
                raise DataError(f"detection class id {d.class_id} outside class list")
        for g in gts:
            if not 0 <= g.class_id < nc:
                raise DataError(f"ground-truth class id {g.class_id} outside class list")
            n_gt[g.class_id] += 1
        tp, _ = match_predictions(dets, gts, iou_threshold)
        for d, flag in zip(dets, tp):
            per_class_conf[d.class_id].append(d.confidence)
            per_class_tp[d.class_id].append(flag)

    # sort each class by confidence (desc) once
    sorted_conf, sorted_tp = [], []
    for c in range(nc):
        order = sorted(
            range(len(per_class_conf[c])), key=lambda i: -per_class_conf[c][i]
        )
        sorted_conf.append(np.array([per_class_conf[c][i] for i in order]))
        sorted_tp.append(
            np.cumsum([per_class_tp[c][i] for i in order]).astype(float)
            if order
            else np.zeros(0)
        )

    ap = np.array(
        [
            average_precision(
                [per_class_tp[c][i] for i in np.argsort(-np.array(per_class_conf[c]), kind="stable")]
                if per_class_conf[c]
                else [],
                int(n_gt[c]),
            )
            for c in range(nc)
        ]
    )

    scored = [c for c in range(nc) if n_gt[c] > 0]

    def pr_at(c, threshold):
        kept = int(np.searchsorted(-sorted_conf[c], -threshold, side="right"))
        if kept == 0:
            return 0.0, 0.0
        tp = sorted_tp[c][kept - 1]
        p = tp / kept
        r = tp / n_gt[c] if n_gt[c] else 0.0
        return p, r

    candidates = sorted(
        {conf for c in range(nc) for conf in sorted_conf[c].tolist()}, reverse=True
    )
    best_thr, best_f1 = 0.0, -1.0
    for thr in candidates:
        f1s = []
        for c in scored:
            p, r = pr_at(c, thr)
            f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
        mean_f1 = float(np.mean(f1s)) if f1s else 0.0
        if mean_f1 > best_f1:
            best_f1, best_thr = mean_f1, thr

    precision = np.zeros(nc)
    recall = np.zeros(nc)
    for c in range(nc):
        precision[c], recall[c] = pr_at(c, best_thr) if candidates else (0.0, 0.0)

    counts = _confusion(dets_by_image, gts_by_image, nc, best_thr, iou_threshold)
    col_sums = counts.sum(axis=0, keepdims=True)
    normalized = np.divide(
        counts, col_sums, out=np.zeros_like(counts), where=col_sums > 0
    )

    classes = [
        ClassMetrics(
            name=class_names[c],
            precision=float(precision[c]),
            recall=float(recall[c]),
            ap50=float(ap[c]),
            n_gt=int(n_gt[c]),
            n_det=len(per_class_conf[c]),
        )
        for c in range(nc)
    ]
    mean = lambda arr: float(np.mean([arr[c] for c in scored])) if scored else 0.0
    return MetricsReport(
        classes=classes,
        precision=mean(precision),
        recall=mean(recall),
        map50=mean(ap),
        operating_conf=float(best_thr),
        confusion=normalized,
        confusion_counts=counts,
        class_names=list(class_names),
    )


# ---------------------------------------------------------------------------
# file formats


def write_predictions(path, rows) -> None:
    """Write detection rows: ``image_id class conf x1 y1 x2 y2`` per line.

    Rows are sorted by (image id, confidence descending) so output is
    stable regardless of production order.
    """
    rows = sorted(rows, key=lambda r: (r[0], -float(r[2]), r[3], r[4]))
    with open(path, "w") as fh:
        for image_id, cls, conf, x1, y1, x2, y2 in rows:
            fh.write(
                f"{image_id} {int(cls)} {float(conf):.6f} "
                f"{float(x1):.2f} {float(y1):.2f} {float(x2):.2f} {float(y2):.2f}\n"
            )


def read_predictions(path) -> dict[str, list[Detection]]:
    """Parse a predictions file into per-image detection lists."""
    out: dict[str, list[Detection]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        image_id = parts[0]
        try:
            cls = int(parts[1])
            conf, x1, y1, x2, y2 = (float(p) for p in parts[2:])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        out.setdefault(image_id, []).append(
            Detection(box=(x1, y1, x2, y2), class_id=cls, confidence=conf)
        )
    return out


def labelset_to_ground_truth(labels) -> dict[str, list[GroundTruth]]:
    """Convert a LabelSet to per-image pixel-space ground-truth boxes."""
    out: dict[str, list[GroundTruth]] = {}
    for im in labels.images:
        image_id = Path(im.path).stem
        gts = []
        for cls, cx, cy, w, h in im.boxes:
            x1 = (cx - w / 2) * im.width
            y1 = (cy - h / 2) * im.height
            x2 = (cx + w / 2) * im.width
            y2 = (cy + h / 2) * im.height
            gts.append(GroundTruth(box=(x1, y1, x2, y2), class_id=int(cls)))
        out[image_id] = gts
    return out
