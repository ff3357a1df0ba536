"""Segmentation scores
"""
from typing import List, Optional

import numpy as np
from pydantic import validator

from .entity import Entity, frozen_array


class ConfusionMatrix(Entity):
    """K x K pixel counts, rows = truth, columns = prediction"""

    counts: np.ndarray

    @validator("counts", pre=True)
    def as_counts(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2 and array.shape[0] == array.shape[1], f"confusion must be K x K, got {array.shape}"
        assert np.issubdtype(array.dtype, np.integer), "confusion counts must be integers"
        assert array.min() >= 0, "confusion counts must be >= 0"
        return frozen_array(array, dtype=np.int64)

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(counts=np.zeros((num_classes, num_classes), dtype=np.int64))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(counts=self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    __hash__ = None  # type: ignore


class MetricReport(Entity):
    class_iou: List[Optional[float]]
    """None where the class is excluded or absent from both truth and prediction"""
    miou: float
    pixel_accuracy: float
    pixels: int
    class_pixels: List[int]
    """Truth pixels per class"""

    @validator("miou", "pixel_accuracy")
    def check_unit(cls, value):
        assert 0.0 <= value <= 1.0, f"scores must be in [0, 1], got {value}"
        return value
