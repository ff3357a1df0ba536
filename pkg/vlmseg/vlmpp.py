"""Pseudo-label purification with the oracle's opinion

Every pixel takes exactly one of four paths (see `PurifyRule`). Confident
teacher pixels pass untouched. Below `tau_conf`, an oracle that agrees raises or
lowers the teacher confidence towards its own through the weight c / tau_conf,
an oracle that disagrees replaces label and confidence, and an uncovered pixel
keeps the teacher's answer. Every low-confidence pixel then has to clear the
final filter.
"""
from logging import getLogger
from typing import Optional

import numpy as np

from vlmseg.classes.enums import BaselineFilter, PurifyRule
from vlmseg.classes.grid import ConfidenceMap, LabelMap, PixelMask
from vlmseg.classes.prediction import VlmLayer
from vlmseg.classes.purify import PurifiedBatch, PurifyConfig, PurifyStats
from vlmseg.errors import GridShapeError
from vlmseg.grid import check_same_hw, check_tau

logger = getLogger("vlmseg")


def _thresholds(cfg: PurifyConfig, num_classes: Optional[int]):
    if num_classes is not None:
        check_tau(cfg.tau_conf, num_classes, "purify.tau_conf")
        check_tau(cfg.filter_tau, num_classes, "purify.final_filter_tau")
    return cfg.tau_conf, cfg.filter_tau


def purify(
    teacher_labels: LabelMap,
    teacher_conf: ConfidenceMap,
    vlm_layer: Optional[VlmLayer],
    cfg: PurifyConfig,
    num_classes: Optional[int] = None,
) -> PurifiedBatch:
    """Purify one pseudo-label map; `vlm_layer=None` means no opinion anywhere"""
    check_same_hw(teacher_labels, teacher_conf)
    num_classes = num_classes if num_classes is not None else teacher_labels.num_classes
    tau, filter_tau = _thresholds(cfg, num_classes)

    labels = teacher_labels.data.astype(np.int64)
    conf = teacher_conf.data.astype(np.float64)
    if vlm_layer is None:
        vlm_layer = VlmLayer.empty(*teacher_labels.hw)
    if vlm_layer.hw != teacher_labels.hw:
        raise GridShapeError(f"oracle layer {vlm_layer.hw} does not match {teacher_labels.hw}")
    vlm_class = vlm_layer.classes.astype(np.int64)
    vlm_conf = vlm_layer.conf
    if num_classes is not None and vlm_class.max() >= num_classes:
        raise GridShapeError(f"oracle class {vlm_class.max()} outside [0, {num_classes})")

    high = conf >= tau
    covered = vlm_layer.covered
    uncovered = ~high & ~covered
    agree = ~high & covered & (vlm_class == labels)
    conflict = ~high & covered & (vlm_class != labels)

    alpha = np.clip(conf / tau, 0.0, 1.0)
    fused = alpha * conf + (1.0 - alpha) * vlm_conf
    out_conf = np.where(agree, fused, np.where(conflict, vlm_conf, conf))
    out_labels = np.where(conflict, vlm_class, labels)
    valid = high | (out_conf >= filter_tau)

    rules = np.select(
        [high, uncovered, agree],
        [int(PurifyRule.HIGH_CONF), int(PurifyRule.NO_OPINION), int(PurifyRule.AGREEMENT)],
        default=int(PurifyRule.CONFLICT),
    )
    stats = PurifyStats(
        high_conf_adopted=int(high.sum()),
        no_vlm_opinion=int(uncovered.sum()),
        fused=int((agree & valid).sum()),
        rectified=int((conflict & valid).sum()),
        filtered=int(((agree | conflict) & ~valid).sum()),
    )
    return PurifiedBatch(
        labels=LabelMap(data=out_labels, num_classes=num_classes),
        conf=ConfidenceMap(data=out_conf),
        valid=PixelMask(data=valid),
        rules=rules,
        stats=stats,
        teacher_labels=teacher_labels,
        teacher_conf=teacher_conf,
        filter_tau=filter_tau,
    )


def baseline_targets(
    teacher_labels: LabelMap,
    teacher_conf: ConfidenceMap,
    mode: BaselineFilter,
    cfg: PurifyConfig,
    num_classes: Optional[int] = None,
) -> PurifiedBatch:
    """Pseudo-labels without any oracle: all of them, or only the confident ones"""
    batch = purify(teacher_labels, teacher_conf, None, cfg, num_classes)
    if mode == BaselineFilter.THRESHOLD:
        return batch
    return batch.copy(update={"valid": PixelMask.full(*teacher_labels.hw)})


def purify_stats_report(batch: PurifiedBatch, truth: Optional[LabelMap] = None) -> dict:
    """Before/after summary of one purified map, JSON ready"""
    rules = batch.rules
    valid = batch.valid.data
    by_rule = {}
    for rule in PurifyRule:
        chosen = rules == rule
        by_rule[rule.name.lower()] = {
            "pixels": int(chosen.sum()),
            "valid": int((chosen & valid).sum()),
            "mean_conf_before": float(batch.teacher_conf.data[chosen].mean()) if chosen.any() else None,
            "mean_conf_after": float(batch.conf.data[chosen].mean()) if chosen.any() else None,
        }
    report = {
        "pixels": int(rules.size),
        "counts": batch.stats.dict(),
        "rules": by_rule,
        "valid": int(valid.sum()),
        "relabeled": int((batch.labels.data != batch.teacher_labels.data).sum()),
        "filter_tau": batch.filter_tau,
        "mean_conf_before": float(batch.teacher_conf.data.mean()),
        "mean_conf_after": float(batch.conf.data.mean()),
    }
    if truth is not None:
        check_same_hw(batch.labels, truth)
        before = batch.teacher_labels.data == truth.data
        after = batch.labels.data == truth.data
        report["accuracy_before"] = float(before.mean())
        report["accuracy_after"] = float(after.mean())
        report["accuracy_after_valid"] = float(after[valid].mean()) if valid.any() else None
    return report
