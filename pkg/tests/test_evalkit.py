import csv

import pytest

from vlmseg.classes.grid import ClassSet
from vlmseg.classes.training import EpochLog
from vlmseg.config import apply_overrides
from vlmseg.errors import ConfigurationError, MetricError
from vlmseg.evalkit import (
    class_improvement,
    pseudo_quality_curve,
    result_rows,
    run_ablation,
    summarize,
    sweep_rows,
    sweep_threshold,
    write_csv,
    write_curve,
    write_reference,
)


def _log(epoch, pseudo=None, student=None, class_iou=()):
    return EpochLog(
        epoch=epoch,
        step=2 * (epoch + 1),
        loss_s=1.0,
        loss_u=0.5,
        loss=1.5,
        pseudo_label_miou=pseudo,
        student_pseudo_miou=student,
        val_miou=0.5,
        val_class_iou=list(class_iou),
    )


def test_identical_variants_give_identical_rows(tiny_cfg):
    cfg = apply_overrides(tiny_cfg, {"train.epochs": 1})
    results = run_ablation(cfg, [("a", {"train.vlmpp": True}), ("b", {"train.vlmpp": True})], seeds=[0])
    assert [result.variant for result in results] == ["a", "b"]
    first, second = result_rows(results)
    first.pop("variant"), second.pop("variant")
    assert first == second
    summary = summarize(results)
    assert [row["runs"] for row in summary] == [1, 1]
    assert summary[0]["test_miou"] == summary[1]["test_miou"]


def test_failing_variant_is_recorded(tiny_cfg):
    cfg = apply_overrides(tiny_cfg, {"train.epochs": 1})
    results = run_ablation(cfg, [("broken", {"purify.tau_conf": 1.5}), ("fine", {})], seeds=[0])
    broken, fine = results
    assert not broken.ok and "tau_conf" in broken.error
    assert fine.ok and fine.test_miou is not None
    assert summarize(results)[0]["runs"] == 0


def test_single_threshold_sweep(tiny_cfg):
    cfg = apply_overrides(tiny_cfg, {"train.epochs": 1})
    rows = sweep_threshold(cfg, [0.8], seeds=[0])
    assert len(rows) == 1
    assert rows[0].key == "purify.tau_conf" and rows[0].value == "0.8"
    assert rows[0].runs == 1
    assert rows[0].purify.total > 0
    assert sweep_rows(rows)[0]["value"] == "0.8"


def test_threshold_sweep_rejects_bad_tau(tiny_cfg):
    with pytest.raises(ConfigurationError):
        sweep_threshold(tiny_cfg, [0.7, 1.5])
    with pytest.raises(ConfigurationError):
        sweep_threshold(tiny_cfg, [0.3])


def test_pseudo_quality_curve():
    logs = [_log(0, 0.4, 0.3), _log(1, 0.4, None), _log(2, None, 0.5)]
    assert pseudo_quality_curve(logs) == [
        (2, 0.4, "teacher"),
        (2, 0.3, "student"),
        (4, 0.4, "teacher"),
        (6, 0.5, "student"),
    ]
    with pytest.raises(MetricError):
        pseudo_quality_curve([_log(0)])
    with pytest.raises(MetricError):
        pseudo_quality_curve([])


def test_class_improvement():
    classes = ClassSet(names=["road", "water"])
    rows = class_improvement([_log(0, class_iou=[0.5, None]), _log(1, class_iou=[0.75, 0.2])], classes)
    assert rows == [
        {"class": "road", "first": 0.5, "last": 0.75, "delta": 0.25},
        {"class": "water", "first": None, "last": 0.2, "delta": None},
    ]
    with pytest.raises(MetricError):
        class_improvement([], classes)


def test_csv_output(tmp_path):
    path = tmp_path / "nested" / "rows.csv"
    write_csv([{"variant": "a", "miou": 0.5}, {"variant": "b", "miou": None, "error": "boom"}], path)
    with path.open(newline="", encoding="utf-8") as stream:
        rows = list(csv.reader(stream))
    assert rows == [["variant", "miou", "error"], ["a", "0.5", ""], ["b", "", "boom"]]

    write_curve([(2, 0.25, "teacher")], tmp_path / "curve.csv")
    assert (tmp_path / "curve.csv").read_text(encoding="utf-8").splitlines() == ["step,value,series", "2,0.25,teacher"]


def test_reference_file(tmp_path):
    write_reference(tmp_path / "reference.json", {"desk": {"vlmpp": 0.5}})
    text = (tmp_path / "reference.json").read_text(encoding="utf-8")
    assert '"adopted_tau": 0.7' in text
    assert '"desk"' in text
