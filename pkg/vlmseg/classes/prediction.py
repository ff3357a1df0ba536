"""What the vision-language oracle says about a scene
"""
from typing import List, Optional

import numpy as np
from pydantic import root_validator, validator

from vlmseg.env import NO_OPINION

from .entity import Entity, frozen_array
from .enums import NormalizationMode, OracleSource
from .grid import PixelMask


class Prompt(Entity):
    text: str

    @validator("text")
    def check_text(cls, value):
        assert value.strip(), "prompt text must not be empty"
        return value


class Mention(Entity):
    """One class named by the oracle together with where it was located"""

    class_index: int
    region: PixelMask
    raw_score: Optional[float] = None
    """Score reported by a remote model; informational only"""

    @validator("class_index")
    def check_index(cls, value):
        assert value >= 0, f"class index must be >= 0, got {value}"
        return value


class VlmPrediction(Entity):
    height: int
    width: int
    mentions: List[Mention] = []
    source: OracleSource = OracleSource.MOCK

    @root_validator(skip_on_failure=True)
    def check_mentions(cls, values):
        seen = set()
        for mention in values["mentions"]:
            assert mention.class_index not in seen, f"class {mention.class_index} mentioned twice"
            seen.add(mention.class_index)
            assert mention.region.hw == (values["height"], values["width"]), (
                f"region {mention.region.hw} outside {values['height']}x{values['width']}"
            )
        return values

    @property
    def hw(self):
        return (self.height, self.width)

    def mentioned(self) -> List[int]:
        return [mention.class_index for mention in self.mentions]


class VlmConfig(Entity):
    gamma: float = 0.95
    """Raw confidence of every mentioned class"""
    epsilon: float = 1e-8
    normalization: NormalizationMode = NormalizationMode.SUM

    @validator("gamma")
    def check_gamma(cls, value):
        assert 0.0 < value <= 1.0, f"gamma must be in (0, 1], got {value}"
        return value

    @validator("epsilon")
    def check_epsilon(cls, value):
        assert value > 0.0, f"epsilon must be > 0, got {value}"
        return value


class MockOracleConfig(Entity):
    miss_rate: float = 0.0
    hallucination_rate: float = 0.0
    region_jitter: int = 0
    """Dilation / erosion iterations applied to every region"""
    seed: int = 0

    @validator("miss_rate", "hallucination_rate")
    def check_rate(cls, value):
        assert 0.0 <= value <= 1.0, f"rates must be in [0, 1], got {value}"
        return value

    @validator("region_jitter")
    def check_jitter(cls, value):
        assert value >= 0, f"region_jitter must be >= 0, got {value}"
        return value

    @property
    def is_perfect(self) -> bool:
        return self.miss_rate == 0.0 and self.hallucination_rate == 0.0 and self.region_jitter == 0


class VlmLayer(Entity):
    """Per-pixel VLM opinion: class index (NO_OPINION when uncovered) and its normalized confidence"""

    classes: np.ndarray
    conf: np.ndarray

    @validator("classes", pre=True)
    def as_classes(cls, value):
        array = np.asarray(value)
        assert array.ndim == 2 and array.size > 0, f"layer classes must be a 2-D grid, got {array.shape}"
        assert np.issubdtype(array.dtype, np.integer), "layer classes must be integers"
        assert array.min() >= NO_OPINION, f"layer classes must be >= {NO_OPINION}"
        return frozen_array(array, dtype=np.int16)

    @validator("conf", pre=True)
    def as_conf(cls, value):
        array = np.asarray(value, dtype=np.float64)
        assert array.ndim == 2, f"layer confidences must be 2-D, got {array.shape}"
        assert np.all(np.isfinite(array)), "layer confidences must be finite"
        assert array.min() >= 0.0 and array.max() <= 1.0, "layer confidences must be in [0, 1]"
        return frozen_array(array)

    @root_validator(skip_on_failure=True)
    def check_layer(cls, values):
        classes, conf = values["classes"], values["conf"]
        assert classes.shape == conf.shape, f"layer maps disagree: {classes.shape} vs {conf.shape}"
        covered = classes != NO_OPINION
        assert np.all(conf[covered] > 0.0), "covered pixels need a positive confidence"
        assert np.all(conf[~covered] == 0.0), "uncovered pixels carry no confidence"
        return values

    @property
    def hw(self):
        return tuple(self.classes.shape)

    @property
    def covered(self) -> np.ndarray:
        return self.classes != NO_OPINION

    @classmethod
    def empty(cls, height: int, width: int) -> "VlmLayer":
        return cls(
            classes=np.full((height, width), NO_OPINION, dtype=np.int16),
            conf=np.zeros((height, width)),
        )
