"""Purification settings and results
"""
from typing import Optional

import numpy as np
from pydantic import root_validator, validator

from .entity import Entity, frozen_array
from .grid import ConfidenceMap, LabelMap, PixelMask


class PurifyConfig(Entity):
    tau_conf: float = 0.7
    final_filter_tau: Optional[float] = None
    """Defaults to tau_conf"""

    @validator("tau_conf", "final_filter_tau")
    def check_unit(cls, value):
        assert value is None or 0.0 < value <= 1.0, f"thresholds must be in (0, 1], got {value}"
        return value

    @property
    def filter_tau(self) -> float:
        return self.tau_conf if self.final_filter_tau is None else self.final_filter_tau


class PurifyStats(Entity):
    """Pixel counts per outcome; the five fields partition the image"""

    high_conf_adopted: int = 0
    """Teacher confident, adopted verbatim (always valid)"""
    no_vlm_opinion: int = 0
    """Low confidence and uncovered by the oracle"""
    fused: int = 0
    """Agreement, fused confidence passed the final filter"""
    rectified: int = 0
    """Conflict, oracle confidence passed the final filter"""
    filtered: int = 0
    """Agreement or conflict pixels that failed the final filter"""

    @property
    def total(self) -> int:
        return self.high_conf_adopted + self.no_vlm_opinion + self.fused + self.rectified + self.filtered

    def merge(self, other: "PurifyStats") -> "PurifyStats":
        return PurifyStats(
            high_conf_adopted=self.high_conf_adopted + other.high_conf_adopted,
            no_vlm_opinion=self.no_vlm_opinion + other.no_vlm_opinion,
            fused=self.fused + other.fused,
            rectified=self.rectified + other.rectified,
            filtered=self.filtered + other.filtered,
        )


class PurifiedBatch(Entity):
    labels: LabelMap
    conf: ConfidenceMap
    valid: PixelMask
    rules: np.ndarray
    """PurifyRule value of every pixel"""
    stats: PurifyStats
    teacher_labels: LabelMap
    teacher_conf: ConfidenceMap
    filter_tau: float

    @validator("rules", pre=True)
    def as_rules(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2, f"rule map must be 2-D, got {array.shape}"
        assert array.min() >= 1 and array.max() <= 4, "rule codes must be 1..4"
        return frozen_array(array, dtype=np.uint8)

    @root_validator(skip_on_failure=True)
    def check_batch(cls, values):
        shape = values["labels"].hw
        for key in ("conf", "valid", "teacher_labels", "teacher_conf"):
            assert values[key].hw == shape, f"{key} {values[key].hw} does not match {shape}"
        assert values["rules"].shape == shape, "rule map does not match the labels"
        return values

    @property
    def hw(self):
        return self.labels.hw
