"""Dataset-driven anchor computation.

Labels come in as YOLO text rows, box sizes are rescaled to the square
network input (letterbox scale), k-means++ seeds twelve width/height
centroids, and a generational mutate-and-keep-if-better loop refines them
under a best-possible-recall style fitness.

The ratio metric for one box against one anchor is
``min(min(w/aw, aw/w), min(h/ah, ah/h))``; a box counts as covered when
its best anchor exceeds the threshold (default 1/4).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .pnm import read_pnm_size

log = logging.getLogger("gaanet.anchors")

#: A box must beat this ratio with some anchor to count as recallable.
RATIO_THRESHOLD = 0.25

#: Boxes smaller than this (pixels at input scale, both dims) are excluded
#: from clustering; they still count toward recall statistics.
MIN_CLUSTER_WH = 2.0

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class AnchorSet:
    """Width/height pairs in input pixels, grouped per detection scale.

    Within each group anchors ascend by area; groups are ordered by scale
    (finest stride first). The detection graph needs 4 groups of 3.
    """

    pairs: tuple[tuple[float, float], ...]
    scales: int = 4

    def __post_init__(self):
        if len(self.pairs) % self.scales:
            raise DataError(
                f"{len(self.pairs)} anchors do not divide into {self.scales} scales"
            )
        per = self.per_scale
        for w, h in self.pairs:
            if w <= 0 or h <= 0:
                raise DataError(f"anchor dimensions must be positive, got ({w}, {h})")
        for s in range(self.scales):
            areas = [w * h for w, h in self.pairs[s * per : (s + 1) * per]]
            if any(a > b for a, b in zip(areas, areas[1:])):
                raise DataError(f"anchors in scale group {s} not sorted by area")

    @property
    def per_scale(self) -> int:
        return len(self.pairs) // self.scales

    @classmethod
    def from_flat(cls, values, scales: int = 4) -> "AnchorSet":
        values = [float(v) for v in values]
        if len(values) % 2:
            raise DataError("anchor list must hold an even number of values")
        pairs = tuple(
            (values[i], values[i + 1]) for i in range(0, len(values), 2)
        )
        return cls(pairs=pairs, scales=scales)

    @classmethod
    def from_array(cls, wh: np.ndarray, scales: int = 4) -> "AnchorSet":
        """Build from an (n, 2) array, sorting globally by area first."""
        wh = np.asarray(wh, dtype=np.float64).reshape(-1, 2)
        order = np.argsort(wh[:, 0] * wh[:, 1], kind="stable")
        pairs = tuple((float(w), float(h)) for w, h in wh[order])
        return cls(pairs=pairs, scales=scales)

    def to_flat(self) -> list[float]:
        return [v for pair in self.pairs for v in pair]

    def to_array(self) -> np.ndarray:
        return np.asarray(self.pairs, dtype=np.float64)

    def scale_group(self, index: int) -> tuple[tuple[float, float], ...]:
        per = self.per_scale
        return self.pairs[index * per : (index + 1) * per]


@dataclass
class LabeledImage:
    path: str
    width: int
    height: int
    #: rows of (class_id, cx, cy, w, h), coordinates normalized to [0, 1]
    boxes: np.ndarray

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 5)


@dataclass
class LabelSet:
    images: list[LabeledImage] = field(default_factory=list)
    rejected_rows: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def n_boxes(self) -> int:
        return sum(len(im.boxes) for im in self.images)

    def pixel_wh(self, input_size: int) -> np.ndarray:
        """Box sizes in pixels after letterbox scaling to the input square."""
        chunks = []
        for im in self.images:
            if not len(im.boxes):
                continue
            scale = input_size / max(im.width, im.height)
            wh = im.boxes[:, 3:5] * np.array([im.width, im.height]) * scale
            chunks.append(wh)
        if not chunks:
            return np.zeros((0, 2))
        return np.concatenate(chunks, axis=0)


@dataclass(frozen=True)
class GAConfig:
    """Knobs of the anchor evolution loop."""

    generations: int = 1000
    mutation_prob: float = 0.9
    sigma: float = 0.1
    clamp: tuple[float, float] = (0.3, 3.0)
    seed: int = 0

    def __post_init__(self):
        if self.generations < 0:
            raise DataError("generations must be >= 0")
        if self.sigma <= 0:
            raise DataError("mutation sigma must be positive")


# ---------------------------------------------------------------------------
# label ingestion


def _parse_label_row(line: str, path, lineno: int):
    parts = line.split()
    if len(parts) != 5:
        raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
    try:
        cls = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: {exc}") from exc
    if cls < 0:
        raise DataError(f"{path}:{lineno}: negative class id")
    if not (0 <= cx <= 1 and 0 <= cy <= 1 and 0 <= w <= 1 and 0 <= h <= 1):
        raise DataError(f"{path}:{lineno}: coordinate outside [0, 1]")
    if w <= 0 or h <= 0:
        raise DataError(f"{path}:{lineno}: box has non-positive size")
    return (cls, cx, cy, w, h)


def _find_image(images_dir: Path, stem: str):
    for suffix in IMAGE_SUFFIXES:
        candidate = images_dir / (stem + suffix)
        if candidate.exists():
            return candidate
    return None


def load_labels(
    root, class_count: int | None = None, assume_size: tuple[int, int] | None = None
) -> LabelSet:
    """Load a YOLO layout: ``root/images/*`` plus ``root/labels/*.txt``.

    Every image contributes an entry (empty list of boxes when no label
    file exists). Malformed or out-of-range rows are rejected and counted,
    never silently dropped. Label files whose image is missing fall back to
    ``assume_size`` when given, otherwise the file is skipped with a
    warning.
    """
    root = Path(root)
    labels_dir = root / "labels"
    images_dir = root / "images"
    if not labels_dir.is_dir():
        raise DataError(f"missing label directory {labels_dir}")

    out = LabelSet()

    def warn(msg):
        out.warnings.append(msg)
        log.warning(msg)

    label_files = sorted(labels_dir.glob("*.txt"))
    image_files = (
        sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if images_dir.is_dir()
        else []
    )
    if not label_files and not image_files:
        warn(f"{root}: no labels or images found, label set is empty")
        return out

    seen_stems = set()
    for lf in label_files:
        stem = lf.stem
        seen_stems.add(stem)
        image = _find_image(images_dir, stem) if images_dir.is_dir() else None
        if image is not None:
            width, height = read_pnm_size(image)
            path = str(image.relative_to(root))
        elif assume_size is not None:
            width, height = assume_size
            path = stem
        else:
            warn(f"{lf}: no matching image and no assumed size, skipped")
            continue
        rows = []
        for lineno, line in enumerate(lf.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = _parse_label_row(line, lf, lineno)
            except DataError as exc:
                out.rejected_rows += 1
                warn(str(exc))
                continue
            if class_count is not None and row[0] >= class_count:
                out.rejected_rows += 1
                warn(f"{lf}:{lineno}: class id {row[0]} >= class count {class_count}")
                continue
            rows.append(row)
        out.images.append(
            LabeledImage(path=path, width=width, height=height, boxes=np.array(rows))
        )

    for img in image_files:
        if img.stem not in seen_stems:
            width, height = read_pnm_size(img)
            out.images.append(
                LabeledImage(
                    path=str(img.relative_to(root)),
                    width=width,
                    height=height,
                    boxes=np.zeros((0, 5)),
                )
            )
    return out


# ---------------------------------------------------------------------------
# fitness


def _as_wh_array(labels, input_size: int) -> np.ndarray:
    if isinstance(labels, LabelSet):
        return labels.pixel_wh(input_size)
    return np.asarray(labels, dtype=np.float64).reshape(-1, 2)


def _ratio_metric(anchors: np.ndarray, wh: np.ndarray) -> np.ndarray:
    """Best symmetric wh ratio of each box over all anchors; shape (n,)."""
    r = wh[:, None, :] / anchors[None, :, :]
    sym = np.minimum(r, 1.0 / r).min(axis=2)
    return sym.max(axis=1)


def _ciou_metric(anchors: np.ndarray, wh: np.ndarray) -> np.ndarray:
    """Best CIoU of each box against zero-centered anchor boxes."""
    from .metrics import ciou_matrix

    boxes = np.concatenate([-wh / 2.0, wh / 2.0], axis=1)
    aboxes = np.concatenate([-anchors / 2.0, anchors / 2.0], axis=1)
    return ciou_matrix(boxes, aboxes).max(axis=1)


def fitness(
    anchors,
    labels,
    threshold: float = RATIO_THRESHOLD,
    input_size: int = 256,
    metric: str = "ratio",
) -> float:
    """Mean over boxes of (best anchor metric, zeroed when not above threshold).

    ``labels`` may be a LabelSet or a raw (n, 2) array of pixel sizes.
    ``metric`` selects the ratio formulation (default) or "ciou".
    """
    wh = _as_wh_array(labels, input_size)
    if not len(wh):
        raise DataError("cannot score anchors against an empty label set")
    a = _anchor_array(anchors)
    best = _ratio_metric(a, wh) if metric == "ratio" else _ciou_metric(a, wh)
    # compensated summation keeps the score independent of reduction order
    return math.fsum(best * (best > threshold)) / len(best)


def best_possible_recall(
    anchors, labels, threshold: float = RATIO_THRESHOLD, input_size: int = 256
) -> float:
    """Fraction of boxes whose best anchor ratio exceeds the threshold."""
    wh = _as_wh_array(labels, input_size)
    if not len(wh):
        raise DataError("cannot score anchors against an empty label set")
    best = _ratio_metric(_anchor_array(anchors), wh)
    return float((best > threshold).mean())


def _anchor_array(anchors) -> np.ndarray:
    if isinstance(anchors, AnchorSet):
        return anchors.to_array()
    return np.asarray(anchors, dtype=np.float64).reshape(-1, 2)


# ---------------------------------------------------------------------------
# k-means seeding


def _kmeans_pp_init(data: np.ndarray, k: int, rng) -> np.ndarray:
    """k-means++ seeding: spread initial centroids by squared distance."""
    n = len(data)
    centroids = np.empty((k, data.shape[1]))
    centroids[0] = data[rng.integers(n)]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i:] = data[rng.integers(n, size=k - i)]
            break
        probs = d2 / total
        centroids[i] = data[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((data - centroids[i]) ** 2).sum(axis=1))
    return centroids


def _lloyd(data: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """Assignment/update iterations until the assignment stops changing."""
    assign = None
    history = []
    for _ in range(max_iter):
        d2 = ((data[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(data)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(len(centroids)):
            members = data[assign == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return centroids, history


def kmeans_anchors(
    labels, k: int = 12, input_size: int = 256, seed: int = 0, scales: int = 4
) -> AnchorSet:
    """Cluster box sizes into k anchors (area-sorted).

    Sizes are standardized by their per-dimension standard deviation before
    clustering so width and height contribute comparably; boxes tinier than
    2 pixels on both sides are left out.
    """
    wh = _as_wh_array(labels, input_size)
    wh = wh[(wh >= MIN_CLUSTER_WH).any(axis=1)]
    if len(wh) < k:
        raise DataError(
            f"need at least {k} boxes of usable size to fit {k} anchors, "
            f"got {len(wh)}; lower k or add data"
        )
    rng = np.random.default_rng(seed)
    std = wh.std(axis=0)
    std[std == 0] = 1.0
    data = wh / std
    centroids = _kmeans_pp_init(data, k, rng)
    centroids, _ = _lloyd(data, centroids)
    return AnchorSet.from_array(centroids * std, scales=scales)


# ---------------------------------------------------------------------------
# genetic refinement


def evolve_anchors(
    seed_anchors: AnchorSet,
    labels,
    ga: GAConfig = GAConfig(),
    input_size: int = 256,
    threshold: float = RATIO_THRESHOLD,
) -> tuple[AnchorSet, list[float]]:
    """Mutate anchors for ``ga.generations`` rounds, keeping strict improvements.

    Per generation every gene is independently multiplied, with probability
    ``ga.mutation_prob``, by a Gaussian factor ``1 + N(0, sigma)`` clamped to
    ``ga.clamp``. Returns the best anchors (re-sorted by area) and the
    fitness history, whose first entry is the seed fitness; the history is
    non-decreasing by construction and the whole run is reproducible from
    ``ga.seed``.
    """
    wh = _as_wh_array(labels, input_size)
    if not len(wh):
        raise DataError("cannot evolve anchors against an empty label set")
    rng = np.random.default_rng(ga.seed)
    best = _anchor_array(seed_anchors).copy()
    best_fit = fitness(best, wh, threshold)
    history = [best_fit]
    lo, hi = ga.clamp
    for _ in range(ga.generations):
        mutate = rng.random(best.shape) < ga.mutation_prob
        noise = rng.normal(0.0, ga.sigma, size=best.shape)
        factors = np.where(mutate, np.clip(1.0 + noise, lo, hi), 1.0)
        candidate = best * factors
        cand_fit = fitness(candidate, wh, threshold)
        if cand_fit > best_fit:
            best, best_fit = candidate, cand_fit
        history.append(best_fit)
    return AnchorSet.from_array(best, scales=seed_anchors.scales), history
