"""Grid types shared by every module: class sets, label maps, probability maps,
confidence maps and pixel masks.
"""
from typing import ClassVar, Dict, List, Optional, Tuple

import numpy as np
from pydantic import root_validator, validator

from vlmseg.env import CONF_UPPER_TOLERANCE, MAX_LABEL_CLASSES, PROB_SUM_TOLERANCE

from .entity import Entity, GridEntity, frozen_array


class ClassSet(Entity):
    """Ordered class vocabulary"""

    names: List[str]
    excluded: List[int] = []
    """Indices left out of the mIoU average (e.g. clutter / ignore classes)"""

    PRESETS: ClassVar[Dict[str, Tuple[List[str], List[int]]]] = {
        "loveda": (
            ["background", "building", "road", "water", "barren", "forest", "agriculture"],
            [],
        ),
        "loveda-ignore": (
            ["background", "building", "road", "water", "barren", "forest", "agriculture"],
            [0],
        ),
        "potsdam": (
            ["impervious surfaces", "building", "low vegetation", "tree", "car", "clutter"],
            [5],
        ),
    }

    @validator("names")
    def check_names(cls, names):
        assert len(names) >= 1, "a class set needs at least one class"
        assert len(names) <= MAX_LABEL_CLASSES, f"at most {MAX_LABEL_CLASSES} classes"
        assert all(name.strip() for name in names), "class names must be non-empty"
        lowered = [name.lower() for name in names]
        assert len(set(lowered)) == len(lowered), f"duplicate class names in {names}"
        return list(names)

    @validator("excluded")
    def check_excluded(cls, excluded, values):
        names = values.get("names", [])
        for idx in excluded:
            assert 0 <= idx < len(names), f"excluded index {idx} outside [0, {len(names)})"
        return sorted(set(excluded))

    @property
    def count(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> Optional[int]:
        """Case-insensitive exact lookup"""
        key = name.strip().lower()
        for idx, candidate in enumerate(self.names):
            if candidate.lower() == key:
                return idx
        return None

    @classmethod
    def synthetic(cls, num_classes: int) -> "ClassSet":
        return cls(names=[f"class{k}" for k in range(num_classes)])

    @classmethod
    def preset(cls, name: str, num_classes: int = 4) -> "ClassSet":
        if name == "synthetic":
            return cls.synthetic(num_classes)
        if name not in cls.PRESETS:
            raise KeyError(f"Unknown class preset {name}, expected one of {sorted(cls.PRESETS)} or synthetic")
        names, excluded = cls.PRESETS[name]
        return cls(names=names, excluded=excluded)


class LabelMap(GridEntity):
    """H x W class indices"""

    num_classes: Optional[int] = None
    """When known, every value must lie in [0, num_classes)"""

    @validator("data", pre=True)
    def as_labels(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2, f"label map must be 2-D, got shape {array.shape}"
        assert array.size > 0, "label map must not be empty"
        if array.dtype == np.uint8:
            return frozen_array(array)
        assert np.issubdtype(array.dtype, np.integer), f"labels must be integers, got {array.dtype}"
        assert array.min() >= 0, "labels must be non-negative"
        assert array.max() < MAX_LABEL_CLASSES, f"labels must be < {MAX_LABEL_CLASSES}"
        return frozen_array(array, dtype=np.uint8)

    @root_validator(skip_on_failure=True)
    def check_range(cls, values):
        num_classes = values.get("num_classes")
        if num_classes is not None:
            assert 1 <= num_classes <= MAX_LABEL_CLASSES, f"bad class count {num_classes}"
            assert int(values["data"].max()) < num_classes, (
                f"label {int(values['data'].max())} outside [0, {num_classes})"
            )
        return values


class ProbMap(GridEntity):
    """H x W x K per-pixel class distribution"""

    @validator("data", pre=True)
    def as_probs(cls, value):
        array = np.asarray(value)
        assert array.ndim == 3, f"probability map must be 3-D, got shape {array.shape}"
        assert array.size > 0, "probability map must not be empty"
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        assert np.all(np.isfinite(array)), "probabilities must be finite"
        assert array.min() >= 0.0, "probabilities must be non-negative"
        assert array.max() <= 1.0 + CONF_UPPER_TOLERANCE, "probabilities must be <= 1"
        sums = array.sum(axis=2, dtype=np.float64)
        assert np.all(np.abs(sums - 1.0) <= PROB_SUM_TOLERANCE), (
            f"per-pixel probabilities must sum to 1 within {PROB_SUM_TOLERANCE}"
        )
        return frozen_array(array)

    @property
    def num_classes(self) -> int:
        return int(self.data.shape[2])


class ConfidenceMap(GridEntity):
    """H x W per-pixel confidence in (0, 1]"""

    @validator("data", pre=True)
    def as_confidence(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2, f"confidence map must be 2-D, got shape {array.shape}"
        assert array.size > 0, "confidence map must not be empty"
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        assert np.all(np.isfinite(array)), "confidences must be finite"
        assert array.min() > 0.0, "confidences must be > 0"
        assert array.max() <= 1.0 + CONF_UPPER_TOLERANCE, "confidences must be <= 1"
        return frozen_array(array)


class PixelMask(GridEntity):
    """H x W booleans"""

    @validator("data", pre=True)
    def as_mask(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2, f"pixel mask must be 2-D, got shape {array.shape}"
        assert array.size > 0, "pixel mask must not be empty"
        if array.dtype != np.bool_:
            assert np.all((array == 0) | (array == 1)), "mask values must be 0/1"
        return frozen_array(array, dtype=np.bool_)

    @property
    def count(self) -> int:
        return int(self.data.sum())

    @classmethod
    def full(cls, height: int, width: int, value: bool = True) -> "PixelMask":
        return cls(data=np.full((height, width), value, dtype=np.bool_))
