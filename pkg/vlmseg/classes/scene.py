"""Synthetic scenes and dataset splits
"""
from typing import Dict, List

import numpy as np
from pydantic import root_validator, validator

from .entity import Entity, frozen_array
from .enums import SplitRole
from .grid import LabelMap


class Scene(Entity):
    id: str
    image: np.ndarray
    """H x W x F real feature grid"""
    truth: LabelMap

    @validator("image", pre=True)
    def as_image(cls, value):
        array = np.asarray(value)
        if array.ndim == 2:
            array = array[:, :, None]
        assert array.ndim == 3, f"scene image must be H x W x F, got shape {array.shape}"
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        assert np.all(np.isfinite(array)), "scene features must be finite"
        return frozen_array(array)

    @root_validator(skip_on_failure=True)
    def check_shapes(cls, values):
        image, truth = values["image"], values["truth"]
        assert image.shape[:2] == truth.data.shape, (
            f"image {image.shape[:2]} and truth {truth.data.shape} disagree"
        )
        return values

    @property
    def hw(self):
        return self.image.shape[:2]

    @property
    def num_features(self) -> int:
        return int(self.image.shape[2])


class SceneGenConfig(Entity):
    height: int = 64
    width: int = 64
    num_classes: int = 4
    num_features: int = 3
    blob_min: int = 3
    """Fewest class blobs (Voronoi seeds) per scene"""
    blob_max: int = 8
    boundary_complexity: float = 1.0
    """0 gives straight Voronoi edges; larger values give ragged multi-class boundaries"""
    noise_sigma: float = 1.0
    class_separation: float = 1.0
    """Scale of the class-mean vectors"""
    seed: int = 0

    @validator("height", "width")
    def check_size(cls, value):
        assert value >= 16, "scenes must be at least 16 x 16"
        return value

    @validator("num_classes")
    def check_classes(cls, value):
        assert 2 <= value <= 255, "num_classes must be in [2, 255]"
        return value

    @validator("num_features")
    def check_features(cls, value):
        assert value >= 1, "num_features must be >= 1"
        return value

    @validator("blob_min")
    def check_blob_min(cls, value):
        assert value >= 2, "blob_min must be >= 2"
        return value

    @validator("blob_max")
    def check_blob_max(cls, value, values):
        assert value >= values.get("blob_min", 2), "blob_max must be >= blob_min"
        return value

    @validator("boundary_complexity", "noise_sigma", "class_separation")
    def check_non_negative(cls, value):
        assert value >= 0, "must be >= 0"
        return value


class DatasetSplit(Entity):
    labeled: List[str]
    unlabeled: List[str]
    val: List[str] = []
    test: List[str] = []
    ratio: float
    seed: int

    @validator("ratio")
    def check_ratio(cls, value):
        assert 0.0 < value <= 1.0, "labeled ratio must be in (0, 1]"
        return value

    @root_validator(skip_on_failure=True)
    def check_disjoint(cls, values):
        pools = [values["labeled"], values["unlabeled"], values["val"], values["test"]]
        seen = set()
        for pool in pools:
            assert not seen.intersection(pool), "split pools must be disjoint"
            seen.update(pool)
        assert len(values["labeled"]) >= 1, "a split needs at least one labeled scene"
        return values

    @property
    def train_pool(self) -> List[str]:
        return self.labeled + self.unlabeled

    def roles(self) -> Dict[str, SplitRole]:
        result = {}
        for role, ids in (
            (SplitRole.LABELED, self.labeled),
            (SplitRole.UNLABELED, self.unlabeled),
            (SplitRole.VAL, self.val),
            (SplitRole.TEST, self.test),
        ):
            for scene_id in ids:
                result[scene_id] = role
        return result
