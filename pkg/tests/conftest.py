import numpy as np
import pytest

from vlmseg.classes.grid import ClassSet, LabelMap
from vlmseg.classes.scene import Scene
from vlmseg.config import TrainerConfig, apply_overrides

TINY = {
    "data.height": 16,
    "data.width": 16,
    "data.num_classes": 3,
    "data.total": 10,
    "train.epochs": 2,
    "train.labeled_ratio": 0.5,
    "train.labeled_batch": 2,
    "train.unlabeled_batch": 2,
}


@pytest.fixture
def tiny_cfg() -> TrainerConfig:
    """10 scenes of 16 x 16, 3 classes: 3 labeled, 3 unlabeled, 2 val, 2 test"""
    return apply_overrides(TrainerConfig(), TINY)


@pytest.fixture
def quadrant_scene() -> Scene:
    truth = np.zeros((16, 16), dtype=np.uint8)
    truth[:8, 8:] = 1
    truth[8:, :8] = 2
    truth[8:, 8:] = 3
    return Scene(id="quad", image=np.zeros((16, 16, 1)), truth=LabelMap(data=truth, num_classes=4))


@pytest.fixture
def four_classes() -> ClassSet:
    return ClassSet(names=["road", "water", "building", "forest"])
