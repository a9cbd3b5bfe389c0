"""Void-aware segmentation and Green View Index metrics.

IoU comes from a confusion matrix (rows = ground truth, columns =
prediction).  GVI is the greenery share of an image's non-void pixels, and
set-level GVI sums pixels before dividing.  Error statistics are reported in
percentage points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyImage, EmptyList, ShapeMismatch, UndefinedIoU, UnpairedRecord
from .labelspace import VOID, ClassCatalog


@dataclass(frozen=True)
class ConfusionMatrix:
    matrix: np.ndarray
    void_skipped: int = 0

    @classmethod
    def empty(cls, C: int) -> "ConfusionMatrix":
        return cls(np.zeros((C, C), dtype=np.int64), 0)

    @property
    def C(self) -> int:
        return self.matrix.shape[0]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.matrix + other.matrix, self.void_skipped + other.void_skipped)


def accumulate_confusion(gt, pred, cm: ConfusionMatrix) -> ConfusionMatrix:
    """Return ``cm`` plus the counts of one ``(gt, pred)`` pair. Void gt pixels are only tallied."""
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    if gt.shape != pred.shape:
        raise ShapeMismatch(f"ground truth {gt.shape} vs prediction {pred.shape}")
    C = cm.C
    valid = gt != VOID
    t = gt[valid]
    p = pred[valid]
    if (p < 0).any() or (p >= C).any() or (t < 0).any() or (t >= C).any():
        raise ShapeMismatch(f"labels outside 0..{C - 1} at valid pixels")
    counts = np.bincount(t * C + p, minlength=C * C).reshape(C, C)
    return ConfusionMatrix(cm.matrix + counts, cm.void_skipped + int((~valid).sum()))


def _subset_counts(m: np.ndarray, classes: Sequence[int]) -> tuple[int, int, int]:
    inside = np.zeros(m.shape[0], dtype=bool)
    inside[list(classes)] = True
    tp = int(m[np.ix_(inside, inside)].sum())
    fp = int(m[np.ix_(~inside, inside)].sum())
    fn = int(m[np.ix_(inside, ~inside)].sum())
    return tp, fp, fn


def iou(cm: ConfusionMatrix, classes: Iterable[int]) -> float:
    """IoU of ``classes`` merged into a single super-class."""
    classes = sorted(set(int(c) for c in classes))
    if not classes:
        raise ValueError("class subset must be non-empty")
    tp, fp, fn = _subset_counts(cm.matrix, classes)
    union = tp + fp + fn
    if union == 0:
        raise UndefinedIoU(f"classes {classes} are absent from both ground truth and prediction")
    return tp / union


def per_class_iou(cm: ConfusionMatrix) -> np.ndarray:
    """Single-class IoU; NaN where the class has an empty union."""
    m = cm.matrix
    tp = np.diag(m).astype(np.float64)
    union = m.sum(axis=0) + m.sum(axis=1) - np.diag(m)
    out = np.full(cm.C, np.nan)
    ok = union > 0
    out[ok] = tp[ok] / union[ok]
    return out


def mean_iou(cm: ConfusionMatrix) -> float:
    """Mean over classes with a nonzero union."""
    ious = per_class_iou(cm)
    ok = ~np.isnan(ious)
    if not ok.any():
        raise UndefinedIoU("no class has a nonzero union")
    return float(ious[ok].mean())


def pixel_accuracy(cm: ConfusionMatrix, classes: Iterable[int] | None = None) -> float:
    """Overall accuracy, or binary accuracy of ``classes`` vs the rest."""
    m = cm.matrix
    total = m.sum()
    if total == 0:
        raise UndefinedIoU("confusion matrix is empty")
    if classes is None:
        return float(np.trace(m) / total)
    tp, fp, fn = _subset_counts(m, sorted(set(classes)))
    return float((total - fp - fn) / total)


def recall(cm: ConfusionMatrix, cls: int) -> float:
    row = cm.matrix[cls].sum()
    if row == 0:
        return math.nan
    return float(cm.matrix[cls, cls] / row)


@dataclass(frozen=True)
class GviRecord:
    image_id: str
    greenery_pixels: int
    valid_pixels: int

    @property
    def gvi(self) -> float:
        return self.greenery_pixels / self.valid_pixels


def gvi(y, greenery: Iterable[int], image_id: str = "") -> GviRecord:
    y = np.asarray(y)
    valid = int(np.count_nonzero(y != VOID))
    if valid == 0:
        raise EmptyImage()
    green = int(np.isin(y, np.asarray(list(greenery), dtype=np.int64)).sum())
    return GviRecord(image_id, green, valid)


def aggregate_gvi(records: Sequence[GviRecord]) -> float:
    """Total greenery pixels over total valid pixels (not the mean of ratios)."""
    if not records:
        raise EmptyList("no GVI records to aggregate")
    return sum(r.greenery_pixels for r in records) / sum(r.valid_pixels for r in records)


def _pair(pred: Sequence[GviRecord], gt: Sequence[GviRecord]) -> tuple[np.ndarray, np.ndarray]:
    gt_by_id = {r.image_id: r for r in gt}
    if len(gt_by_id) != len(gt) or len(pred) != len(gt):
        raise UnpairedRecord("predicted and ground-truth records must pair one-to-one by image id")
    try:
        pairs = [(p.gvi, gt_by_id[p.image_id].gvi) for p in pred]
    except KeyError as e:
        raise UnpairedRecord(f"no ground-truth record for image {e.args[0]!r}") from None
    if not pairs:
        raise EmptyList("no GVI records")
    a = np.array(pairs)
    return a[:, 0], a[:, 1]


def pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    """Sample Pearson correlation, ``None`` when undefined (n < 2 or zero variance)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or (x == x[0]).all() or (y == y[0]).all():
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class GviErrorStats:
    mae_pct: float
    pcc: float | None
    ee_pct: tuple[float, float]


def gvi_error_stats(pred: Sequence[GviRecord], gt: Sequence[GviRecord], band=(0.05, 0.95)) -> GviErrorStats:
    """MAE, Pearson correlation and the percentile band of signed errors.

    Percentiles interpolate linearly between order statistics at rank
    ``(n - 1) * q``.
    """
    p, g = _pair(pred, gt)
    err = 100.0 * (p - g)
    lo, hi = np.percentile(err, [100 * band[0], 100 * band[1]], method="linear")
    return GviErrorStats(float(np.abs(err).mean()), pearson(p, g), (float(lo), float(hi)))


@dataclass
class MetricsReport:
    class_names: list[str]
    per_class_iou: np.ndarray
    mean_iou: float
    greenery_iou: float | None
    greenery_class_iou: dict
    gvi_pred: list[GviRecord]
    gvi_gt: list[GviRecord]
    aggregate_gvi_pred: float
    aggregate_gvi_gt: float
    errors: GviErrorStats
    void_skipped: int
    extra: dict = field(default_factory=dict)

    def to_json_dict(self, digits: int = 6) -> dict:
        def r(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return None
            return float(f"{float(v):.{digits}g}")

        gt_by_id = {rec.image_id: rec for rec in self.gvi_gt}
        out = {
            "per_class_iou": {n: r(v) for n, v in zip(self.class_names, self.per_class_iou)},
            "mean_iou": r(self.mean_iou),
            "greenery_iou": r(self.greenery_iou),
            "greenery_class_iou": {k: r(v) for k, v in self.greenery_class_iou.items()},
            "per_image_gvi": {
                rec.image_id: {"pred": r(rec.gvi), "gt": r(gt_by_id[rec.image_id].gvi)} for rec in self.gvi_pred
            },
            "aggregate_gvi": {"pred": r(self.aggregate_gvi_pred), "gt": r(self.aggregate_gvi_gt)},
            "mae_pct": r(self.errors.mae_pct),
            "pcc": r(self.errors.pcc),
            "ee_pct": {"p5": r(self.errors.ee_pct[0]), "p95": r(self.errors.ee_pct[1])},
            "void_skipped": int(self.void_skipped),
        }
        out.update(self.extra)
        return out


def evaluate(pairs: Sequence[tuple[str, np.ndarray, np.ndarray]], catalog: ClassCatalog) -> MetricsReport:
    """Full report over ``(image_id, gt, pred)`` triples.

    Greenery IoU is ``None`` when the catalog has no greenery classes or they
    never occur in either map.
    """
    if not pairs:
        raise EmptyList("nothing to evaluate")
    cm = ConfusionMatrix.empty(catalog.C)
    green = catalog.greenery
    rec_pred, rec_gt = [], []
    for image_id, g, p in pairs:
        cm = accumulate_confusion(g, p, cm)
        rec_gt.append(gvi(g, green, image_id))
        # GVI of the prediction is measured over the same non-void pixels as the ground truth
        masked = np.where(np.asarray(g) == VOID, VOID, p)
        rec_pred.append(gvi(masked, green, image_id))
    green_iou = None
    green_each = {}
    if green:
        try:
            green_iou = iou(cm, green)
        except UndefinedIoU:
            green_iou = None
        ious = per_class_iou(cm)
        green_each = {catalog.classes[i].name: ious[i] for i in green}
    return MetricsReport(
        class_names=catalog.names,
        per_class_iou=per_class_iou(cm),
        mean_iou=mean_iou(cm),
        greenery_iou=green_iou,
        greenery_class_iou=green_each,
        gvi_pred=rec_pred,
        gvi_gt=rec_gt,
        aggregate_gvi_pred=aggregate_gvi(rec_pred),
        aggregate_gvi_gt=aggregate_gvi(rec_gt),
        errors=gvi_error_stats(rec_pred, rec_gt),
        void_skipped=cm.void_skipped,
    )
