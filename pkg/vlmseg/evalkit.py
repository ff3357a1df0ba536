"""Experiment harness: ablations, sweeps, pseudo-label quality curves and CSV output

Every run is a full training from a config plus overrides; seeds are shared
across variants so rows differ only by what the overrides change.
"""
import csv
import json
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from vlmseg.classes.entity import Entity
from vlmseg.classes.enums import EvalModel, SplitRole
from vlmseg.classes.grid import ClassSet
from vlmseg.classes.purify import PurifyStats
from vlmseg.classes.training import EpochLog
from vlmseg.config import TrainerConfig, apply_overrides
from vlmseg.env import DEFAULT_LABELED_RATIOS, DEFAULT_TAUS, REFERENCE_SCALE_RESULTS
from vlmseg.errors import MetricError, VlmSegError
from vlmseg.grid import check_tau
from vlmseg.trainer import evaluate_params, prepare_dataset, train

logger = getLogger("vlmseg")

Variants = Union[Mapping[str, Mapping[str, object]], Sequence[Tuple[str, Mapping[str, object]]]]

DEFAULT_VARIANTS = [
    ("without-vlmpp", {"train.vlmpp": False}),
    ("vlmpp", {"train.vlmpp": True}),
]


class RunResult(Entity):
    variant: str
    seed: int
    overrides: Dict[str, str] = {}
    val_miou: Optional[float] = None
    """Of the best checkpoint"""
    test_miou: Optional[float] = None
    test_accuracy: Optional[float] = None
    pseudo_label_miou: Optional[float] = None
    """Last epoch"""
    teacher_raw_miou: Optional[float] = None
    purify: PurifyStats = PurifyStats()
    """Last epoch"""
    class_iou_first: List[Optional[float]] = []
    class_iou_last: List[Optional[float]] = []
    logs: List[EpochLog] = []
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class SweepRow(Entity):
    key: str
    value: str
    runs: int
    val_miou: Optional[float] = None
    test_miou: Optional[float] = None
    purify: PurifyStats = PurifyStats()


def run_one(cfg: TrainerConfig, variant: str = "run", overrides: Optional[Mapping[str, object]] = None) -> RunResult:
    """Train once and score the best checkpoint on the test pool"""
    dataset = prepare_dataset(cfg)
    checkpoint, logs = train(dataset, cfg)
    params = checkpoint.state.teacher if cfg.train.eval_model == EvalModel.TEACHER else checkpoint.state.student
    test_scenes = dataset.pool(SplitRole.TEST) or dataset.pool(SplitRole.VAL)
    test = evaluate_params(params, test_scenes, dataset.classes)
    last = logs[-1]
    return RunResult(
        variant=variant,
        seed=cfg.seed,
        overrides={key: str(value) for key, value in (overrides or {}).items()},
        val_miou=checkpoint.val_miou,
        test_miou=test.miou,
        test_accuracy=test.pixel_accuracy,
        pseudo_label_miou=last.pseudo_label_miou,
        teacher_raw_miou=last.teacher_raw_miou,
        purify=last.purify,
        class_iou_first=logs[0].val_class_iou,
        class_iou_last=last.val_class_iou,
        logs=logs,
    )


def _variant_list(variants: Variants) -> List[Tuple[str, Mapping[str, object]]]:
    if isinstance(variants, Mapping):
        return list(variants.items())
    return list(variants)


def run_ablation(
    base_cfg: TrainerConfig, variants: Variants = DEFAULT_VARIANTS, seeds: Sequence[int] = (0,)
) -> List[RunResult]:
    """One row per (variant, seed). A failing variant is recorded and the rest continue."""
    results = []
    for name, overrides in _variant_list(variants):
        for seed in seeds:
            try:
                cfg = apply_overrides(base_cfg, {**overrides, "seed": seed})
                result = run_one(cfg, name, overrides)
            except VlmSegError as err:
                logger.warning(f"Variant {name} (seed {seed}) failed: {err}")
                result = RunResult(
                    variant=name,
                    seed=seed,
                    overrides={key: str(value) for key, value in overrides.items()},
                    error=str(err),
                )
            logger.info(f"{name} seed {seed}: test mIoU {result.test_miou}")
            results.append(result)
    return results


def _mean(values) -> Optional[float]:
    values = [value for value in values if value is not None]
    return float(np.mean(values)) if values else None


def summarize(results: List[RunResult]) -> List[dict]:
    """Per-variant means over seeds"""
    rows = []
    for name in dict.fromkeys(result.variant for result in results):
        runs = [result for result in results if result.variant == name and result.ok]
        rows.append(
            {
                "variant": name,
                "runs": len(runs),
                "val_miou": _mean(run.val_miou for run in runs),
                "test_miou": _mean(run.test_miou for run in runs),
                "test_accuracy": _mean(run.test_accuracy for run in runs),
                "pseudo_label_miou": _mean(run.pseudo_label_miou for run in runs),
            }
        )
    return rows


def class_improvement(logs: List[EpochLog], classes: ClassSet) -> List[dict]:
    """Validation IoU per class at the first and last epoch, and the change"""
    if not logs:
        raise MetricError("no epoch logs")
    first_iou, last_iou = logs[0].val_class_iou, logs[-1].val_class_iou
    rows = []
    for idx, name in enumerate(classes.names):
        first = first_iou[idx] if idx < len(first_iou) else None
        last = last_iou[idx] if idx < len(last_iou) else None
        delta = last - first if first is not None and last is not None else None
        rows.append({"class": name, "first": first, "last": last, "delta": delta})
    return rows


def sweep_values(
    base_cfg: TrainerConfig, key: str, values: Sequence[object], seeds: Sequence[int] = (0,)
) -> List[SweepRow]:
    rows = []
    for value in values:
        results = run_ablation(base_cfg, [(f"{key}={value}", {key: value})], seeds)
        runs = [result for result in results if result.ok]
        stats = PurifyStats()
        for run in runs:
            stats = stats.merge(run.purify)
        rows.append(
            SweepRow(
                key=key,
                value=str(value),
                runs=len(runs),
                val_miou=_mean(run.val_miou for run in runs),
                test_miou=_mean(run.test_miou for run in runs),
                purify=stats,
            )
        )
    return rows


def sweep_threshold(
    base_cfg: TrainerConfig, taus: Optional[Sequence[float]] = None, seeds: Sequence[int] = (0,)
) -> List[SweepRow]:
    taus = list(DEFAULT_TAUS if taus is None else taus)
    for tau in taus:
        check_tau(tau, base_cfg.data.num_classes, "purify.tau_conf")
    return sweep_values(base_cfg, "purify.tau_conf", taus, seeds)


def sweep_labeled_ratio(
    base_cfg: TrainerConfig, ratios: Optional[Sequence[float]] = None, seeds: Sequence[int] = (0,)
) -> List[SweepRow]:
    ratios = list(DEFAULT_LABELED_RATIOS if ratios is None else ratios)
    return sweep_values(base_cfg, "train.labeled_ratio", ratios, seeds)


def pseudo_quality_curve(
    logs: List[EpochLog], teacher_series: str = "teacher", student_series: str = "student"
) -> List[Tuple[int, float, str]]:
    """(step, mIoU, series) for the purified teacher labels and the student's own predictions"""
    points = []
    for log in logs:
        if log.pseudo_label_miou is not None:
            points.append((log.step, log.pseudo_label_miou, teacher_series))
        if log.student_pseudo_miou is not None:
            points.append((log.step, log.student_pseudo_miou, student_series))
    if not points:
        raise MetricError("no pseudo-label scores in the logs")
    return points


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: List[dict], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = list(dict.fromkeys(key for row in rows for key in row))
    with path.open("w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row.get(key)) for key in header])


def result_rows(results: List[RunResult]) -> List[dict]:
    rows = []
    for result in results:
        row = {
            "variant": result.variant,
            "seed": result.seed,
            "val_miou": result.val_miou,
            "test_miou": result.test_miou,
            "test_accuracy": result.test_accuracy,
            "pseudo_label_miou": result.pseudo_label_miou,
            "teacher_raw_miou": result.teacher_raw_miou,
        }
        row.update(result.purify.dict())
        row["error"] = result.error
        rows.append(row)
    return rows


def sweep_rows(rows: List[SweepRow]) -> List[dict]:
    out = []
    for row in rows:
        item = {
            "key": row.key,
            "value": row.value,
            "runs": row.runs,
            "val_miou": row.val_miou,
            "test_miou": row.test_miou,
        }
        item.update(row.purify.dict())
        out.append(item)
    return out


def write_curve(points: List[Tuple[int, float, str]], path: Union[str, Path]) -> None:
    write_csv([{"step": step, "value": value, "series": series} for step, value, series in points], path)


def write_reference(path: Union[str, Path], extra: Optional[dict] = None) -> None:
    """Full-scale reference numbers beside desk results, for inspection only"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"reference": REFERENCE_SCALE_RESULTS, **(extra or {})}
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n", encoding="utf-8")
