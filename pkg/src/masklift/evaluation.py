"""mIoU and expanded-label statistics."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import IGNORE


def confusion_matrix(pred, gt, num_classes: int) -> np.ndarray:
    """C x (C+1) counts, rows = ground truth, columns = prediction.

    Points with IGNORE ground truth are dropped. The extra last column counts
    labeled points that received no prediction (IGNORE in ``pred``).
    """
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred {pred.shape} and gt {gt.shape} differ in length")
    C = num_classes
    keep = gt != IGNORE
    p = np.where(pred[keep] == IGNORE, C, pred[keep])
    if np.any((gt[keep] >= C) | (p < 0) | (p > C)):
        raise ValueError(f"labels outside [0, {C})")
    return np.bincount(gt[keep] * (C + 1) + p, minlength=C * (C + 1)).reshape(C, C + 1)


def miou(pred, gt, num_classes: int):
    """Per-class IoU and their mean.

    IoU_c = TP / (TP + FP + FN). Classes with an empty union are NaN in the
    per-class array and left out of the mean. A missing prediction counts as a
    false negative for the true class.
    """
    cm = confusion_matrix(pred, gt, num_classes)
    if cm.sum() == 0:
        raise ValueError("every ground-truth label is IGNORE; nothing to evaluate")
    tp = np.diag(cm[:, :num_classes]).astype(np.float64)
    fn = cm.sum(axis=1) - tp
    fp = cm[:, :num_classes].sum(axis=0) - tp
    union = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    return iou, float(np.nanmean(iou))


@dataclass(frozen=True)
class LabelStats:
    count: int
    accuracy: float
    evaluated: int

    def as_dict(self) -> dict:
        return asdict(self)


def label_stats(labels, gt) -> LabelStats:
    """Number of labels, and their accuracy where ground truth exists.

    Accuracy is NaN when no label has ground truth to compare with.
    """
    labels = np.asarray(labels, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if labels.shape != gt.shape:
        raise ValueError(f"labels {labels.shape} and gt {gt.shape} differ in length")
    has = labels != IGNORE
    both = has & (gt != IGNORE)
    n = int(both.sum())
    acc = float(np.count_nonzero(labels[both] == gt[both]) / n) if n else float("nan")
    return LabelStats(count=int(has.sum()), accuracy=acc, evaluated=n)


def aggregate_stats(stats: list) -> dict:
    """Mean count and mean accuracy across scenes."""
    if not stats:
        return {"scenes": 0, "count": None, "accuracy": None}
    accs = [s.accuracy for s in stats if not np.isnan(s.accuracy)]
    return {"scenes": len(stats),
            "count": float(np.mean([s.count for s in stats])),
            "accuracy": float(np.mean(accs)) if accs else None}
