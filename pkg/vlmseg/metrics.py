"""Confusion matrices and IoU
"""
from typing import Optional

import numpy as np

from vlmseg.classes.grid import ClassSet, LabelMap, PixelMask
from vlmseg.classes.metric import ConfusionMatrix, MetricReport
from vlmseg.errors import GridShapeError, MetricError
from vlmseg.grid import check_same_hw


def confusion_counts(pred: np.ndarray, truth: np.ndarray, num_classes: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.size and max(pred.max(), truth.max()) >= num_classes:
        raise GridShapeError(f"labels outside [0, {num_classes})")
    flat = np.bincount(truth * num_classes + pred, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


def confusion(
    pred: LabelMap, truth: LabelMap, mask: Optional[PixelMask] = None, num_classes: Optional[int] = None
) -> ConfusionMatrix:
    check_same_hw(pred, truth, mask)
    num_classes = num_classes or truth.num_classes or pred.num_classes
    if num_classes is None:
        num_classes = int(max(pred.data.max(), truth.data.max())) + 1
    if mask is None:
        return ConfusionMatrix(counts=confusion_counts(pred.data, truth.data, num_classes))
    return ConfusionMatrix(
        counts=confusion_counts(pred.data[mask.data], truth.data[mask.data], num_classes)
    )


def miou(cm: ConfusionMatrix, classes: ClassSet) -> MetricReport:
    """IoU = TP / (TP + FP + FN) per class, averaged over classes that are
    neither excluded nor absent from both truth and prediction"""
    if cm.num_classes != classes.count:
        raise MetricError(f"{cm.num_classes}-class confusion scored with {classes.count} classes")
    counts = cm.counts
    tp = np.diag(counts)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    class_iou = []
    for idx in range(cm.num_classes):
        if idx in classes.excluded or union[idx] == 0:
            class_iou.append(None)
        else:
            class_iou.append(float(tp[idx] / union[idx]))
    included = [iou for iou in class_iou if iou is not None]
    if not included:
        raise MetricError("no class can be scored: every class is excluded or absent")
    total = cm.total
    return MetricReport(
        class_iou=class_iou,
        miou=float(np.mean(included)),
        pixel_accuracy=float(tp.sum() / total) if total else 0.0,
        pixels=total,
        class_pixels=[int(n) for n in counts.sum(axis=1)],
    )


def try_miou(cm: ConfusionMatrix, classes: ClassSet) -> Optional[float]:
    try:
        return miou(cm, classes).miou
    except MetricError:
        return None
