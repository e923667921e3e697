"""Pixel-wise evaluation: confusion matrix, accuracy, IoU, precision, recall.

The matrix is square over the full label space (5 indices including the
unrecognized/ignore class).  Pixels whose ground truth is the ignore class
never enter the matrix; they are tallied separately, so nothing a backend
predicts there can move any metric.  Predictions OF the ignore class at
real ground truth do count (as errors), keeping matrix totals equal to the
number of evaluated pixels.

Per-class metrics with a zero denominator are reported as None ("undefined")
and excluded from means, never silently coerced to 0 or 1.
"""

from dataclasses import dataclass, field

import numpy as np

from .raster import NUM_CLASSES, IGNORE_INDEX, LabelRaster
from .typology import ClassLabel, REAL_CLASSES


class UndefinedMetricError(ValueError):
    """A metric has no defined value (e.g. empty matrix)."""


@dataclass
class ConfusionMatrix:
    """Rows = ground truth, columns = prediction, over all class indices."""

    counts: np.ndarray = field(
        default_factory=lambda: np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    )
    ignore: int = IGNORE_INDEX
    ignored: int = 0

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (NUM_CLASSES, NUM_CLASSES):
            raise ValueError(f"expected {NUM_CLASSES}x{NUM_CLASSES} counts")
        if (self.counts < 0).any():
            raise ValueError("negative counts")
        if self.counts[self.ignore].any():
            raise ValueError("ignore-class row must be empty")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def add(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.ignore != self.ignore:
            raise ValueError("mismatched ignore classes")
        return ConfusionMatrix(self.counts + other.counts, self.ignore,
                               self.ignored + other.ignored)

    def to_json(self) -> dict:
        return {
            "counts": self.counts.tolist(),
            "ignore": self.ignore,
            "ignored": self.ignored,
        }


def confusion(gt: LabelRaster, pred: LabelRaster,
              ignore: int = IGNORE_INDEX) -> ConfusionMatrix:
    """Tally gt/pred pixel pairs, excluding ignore-class ground truth."""
    if (gt.height, gt.width) != (pred.height, pred.width):
        raise ValueError(
            f"dimension mismatch: gt {gt.width}x{gt.height} vs "
            f"pred {pred.width}x{pred.height}"
        )
    g = gt.classes.ravel().astype(np.int64)
    p = pred.classes.ravel().astype(np.int64)
    keep = g != ignore
    flat = g[keep] * NUM_CLASSES + p[keep]
    counts = np.bincount(flat, minlength=NUM_CLASSES * NUM_CLASSES)
    return ConfusionMatrix(
        counts.reshape(NUM_CLASSES, NUM_CLASSES),
        ignore=ignore,
        ignored=int((~keep).sum()),
    )


def accuracy(m: ConfusionMatrix) -> float:
    """Correctly classified pixels over all evaluated pixels."""
    total = m.total
    if total == 0:
        raise UndefinedMetricError("accuracy undefined on an empty matrix")
    return float(np.trace(m.counts)) / total


def _tp_fp_fn(m: ConfusionMatrix, c: int):
    tp = int(m.counts[c, c])
    fp = int(m.counts[:, c].sum()) - tp
    fn = int(m.counts[c, :].sum()) - tp
    return tp, fp, fn


def iou(m: ConfusionMatrix, c) -> float | None:
    """Intersection over union for one class; None when the class is absent."""
    c = int(c)
    tp, fp, fn = _tp_fp_fn(m, c)
    union = tp + fp + fn
    if union == 0:
        return None
    return tp / union


def precision(m: ConfusionMatrix, c) -> float | None:
    c = int(c)
    tp, fp, _ = _tp_fp_fn(m, c)
    if tp + fp == 0:
        return None
    return tp / (tp + fp)


def recall(m: ConfusionMatrix, c) -> float | None:
    c = int(c)
    tp, _, fn = _tp_fp_fn(m, c)
    if tp + fn == 0:
        return None
    return tp / (tp + fn)


def binary_accuracy(m: ConfusionMatrix, c) -> float | None:
    """One-vs-rest accuracy (tp + tn) / total for a single class."""
    total = m.total
    if total == 0:
        return None
    c = int(c)
    tp, fp, fn = _tp_fp_fn(m, c)
    tn = total - tp - fp - fn
    return (tp + tn) / total


def miou(m: ConfusionMatrix) -> float:
    """Mean IoU over the real classes with a defined IoU."""
    values = [v for c in REAL_CLASSES if (v := iou(m, c)) is not None]
    if not values:
        raise UndefinedMetricError("no class has a defined IoU")
    return sum(values) / len(values)


def format_percent(value: float) -> str:
    """Render a fraction the way result tables print it, e.g. 0.755 -> '75.50%'."""
    return f"{value * 100:.2f}%"


@dataclass
class MetricsReport:
    """Matrix plus every derived metric, JSON- and text-serializable."""

    matrix: ConfusionMatrix
    overall_accuracy: float
    per_class: dict
    miou: float | None

    @classmethod
    def from_matrix(cls, m: ConfusionMatrix) -> "MetricsReport":
        per_class = {}
        for c in REAL_CLASSES:
            per_class[c] = {
                "iou": iou(m, c),
                "precision": precision(m, c),
                "recall": recall(m, c),
                "binary_accuracy": binary_accuracy(m, c),
            }
        defined = [v["iou"] for v in per_class.values() if v["iou"] is not None]
        return cls(
            matrix=m,
            overall_accuracy=accuracy(m),
            per_class=per_class,
            miou=sum(defined) / len(defined) if defined else None,
        )

    def summary_lines(self) -> list:
        """Percentage lines (two decimals) for comparison against result tables.

        Per-class lines carry both readings of "class accuracy": recall and
        one-vs-rest binary accuracy.
        """
        lines = [
            f"overall accuracy: {format_percent(self.overall_accuracy)}",
            "mean IoU: " + (format_percent(self.miou) if self.miou is not None else "undefined"),
        ]
        for c, vals in self.per_class.items():
            name = ClassLabel(c).display_name
            parts = []
            for key in ("iou", "precision", "recall", "binary_accuracy"):
                v = vals[key]
                parts.append(f"{key}={format_percent(v) if v is not None else 'undefined'}")
            lines.append(f"{name}: " + " ".join(parts))
        return lines

    def to_json(self) -> dict:
        return {
            "confusion": self.matrix.to_json(),
            "overall_accuracy": self.overall_accuracy,
            "miou": self.miou,
            "per_class": {
                str(int(c)): dict(vals) for c, vals in self.per_class.items()
            },
            "summary": self.summary_lines(),
        }
