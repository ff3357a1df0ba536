"""Augmentation records: geometric transforms, weak/strong recipes and CutMix boxes
"""
from typing import Optional

import numpy as np
from pydantic import root_validator, validator

from .entity import Entity


class GeoTransform(Entity):
    """Shared by the weak and strong view of one sample; labels resample nearest-neighbour"""

    hflip: bool = False
    vflip: bool = False
    scale: float = 1.0
    """Resize factor; the result is centre-cropped or symmetric-padded back to H x W"""

    @validator("scale")
    def check_scale(cls, value):
        assert 0.5 <= value <= 2.0, f"scale must be in [0.5, 2.0], got {value}"
        return value

    @property
    def is_identity(self) -> bool:
        return not self.hflip and not self.vflip and self.scale == 1.0


class WeakRecipe(Entity):
    hflip_prob: float = 0.5
    vflip_prob: float = 0.5
    scale_prob: float = 0.5
    scale_min: float = 0.5
    scale_max: float = 2.0

    @validator("hflip_prob", "vflip_prob", "scale_prob")
    def check_prob(cls, value):
        assert 0.0 <= value <= 1.0, "probabilities must be in [0, 1]"
        return value

    @root_validator(skip_on_failure=True)
    def check_scale_range(cls, values):
        low, high = values["scale_min"], values["scale_max"]
        assert 0.5 <= low <= high <= 2.0, "scale range must satisfy 0.5 <= min <= max <= 2.0"
        return values


class CutMixBox(Entity):
    """Rectangle pasted from a donor sample; area limits are enforced where boxes are drawn"""

    donor_id: str
    top: int
    left: int
    height: int
    width: int

    @validator("top", "left")
    def check_origin(cls, value):
        assert value >= 0, "box origin must be non-negative"
        return value

    @validator("height", "width")
    def check_extent(cls, value):
        assert value >= 1, "box extent must be positive"
        return value

    def fits(self, height: int, width: int) -> bool:
        return self.top + self.height <= height and self.left + self.width <= width

    def area_fraction(self, height: int, width: int) -> float:
        return self.height * self.width / float(height * width)

    def mask(self, height: int, width: int) -> np.ndarray:
        mask = np.zeros((height, width), dtype=np.bool_)
        mask[self.top : self.top + self.height, self.left : self.left + self.width] = True
        return mask

    @property
    def slices(self):
        return (
            slice(self.top, self.top + self.height),
            slice(self.left, self.left + self.width),
        )


class StrongRecipe(Entity):
    """Photometric jitter and blur touch features only, never labels"""

    brightness: float = 0.2
    """Max absolute brightness delta"""
    contrast: float = 0.2
    """Max relative contrast change"""
    blur_prob: float = 0.5
    blur_sigma_min: float = 0.1
    blur_sigma_max: float = 1.0
    cutmix: Optional[CutMixBox] = None

    @validator("brightness", "contrast", "blur_sigma_min", "blur_sigma_max")
    def check_non_negative(cls, value):
        assert value >= 0, "strengths must be >= 0"
        return value

    @validator("blur_prob")
    def check_prob(cls, value):
        assert 0.0 <= value <= 1.0, "blur_prob must be in [0, 1]"
        return value

    @root_validator(skip_on_failure=True)
    def check_sigma_range(cls, values):
        assert values["blur_sigma_min"] <= values["blur_sigma_max"], "blur sigma range inverted"
        return values

    @classmethod
    def identity(cls) -> "StrongRecipe":
        return cls(brightness=0.0, contrast=0.0, blur_prob=0.0, blur_sigma_min=0.0, blur_sigma_max=0.0)
