"""Desk-scale ablations; run with `pytest -m slow`"""
import numpy as np
import pytest

from vlmseg.config import TrainerConfig, apply_overrides
from vlmseg.evalkit import DEFAULT_VARIANTS, run_ablation

DESK = {
    "data.height": 64,
    "data.width": 64,
    "data.num_classes": 4,
    "data.total": 200,
    "train.labeled_ratio": 0.05,
    "vlm.normalization": "raw",
}


@pytest.fixture(scope="module")
def desk_results():
    cfg = apply_overrides(TrainerConfig(), DESK)
    return run_ablation(cfg, DEFAULT_VARIANTS, seeds=(0, 1, 2))


@pytest.mark.slow
def test_purification_improves_test_miou(desk_results):
    by_seed = {}
    for result in desk_results:
        assert result.ok, result.error
        by_seed.setdefault(result.seed, {})[result.variant] = result.test_miou
    gaps = [runs["vlmpp"] - runs["without-vlmpp"] for runs in by_seed.values()]
    assert all(gap > 0 for gap in gaps)
    assert np.mean(gaps) >= 0.03


@pytest.mark.slow
def test_purified_pseudo_labels_beat_raw_ones(desk_results):
    by_seed = {}
    for result in desk_results:
        by_seed.setdefault(result.seed, {})[result.variant] = result.logs
    wins, total = 0, 0
    for runs in by_seed.values():
        for with_log, without_log in zip(runs["vlmpp"][1:], runs["without-vlmpp"][1:]):
            if with_log.pseudo_label_miou is None or without_log.pseudo_label_miou is None:
                continue
            total += 1
            wins += with_log.pseudo_label_miou >= without_log.pseudo_label_miou
    assert total > 0
    assert wins >= 0.9 * total
