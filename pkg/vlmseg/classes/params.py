"""Classifier parameters and the teacher/student training state
"""
import hashlib

import numpy as np
from pydantic import root_validator, validator

from .entity import Entity, frozen_array


class ModelParams(Entity):
    """Linear per-pixel classifier: logits = features @ weights + bias"""

    weights: np.ndarray
    """F x K"""
    bias: np.ndarray
    """K"""

    @validator("weights", pre=True)
    def as_weights(cls, value):
        array = np.asarray(value, dtype=np.float64)
        assert array.ndim == 2, f"weights must be F x K, got shape {array.shape}"
        assert np.all(np.isfinite(array)), "weights must be finite"
        return frozen_array(array)

    @validator("bias", pre=True)
    def as_bias(cls, value):
        array = np.asarray(value, dtype=np.float64).reshape(-1)
        assert np.all(np.isfinite(array)), "bias must be finite"
        return frozen_array(array)

    @root_validator(skip_on_failure=True)
    def check_shapes(cls, values):
        assert values["weights"].shape[1] == values["bias"].shape[0], (
            f"weights {values['weights'].shape} and bias {values['bias'].shape} disagree"
        )
        return values

    @property
    def num_features(self) -> int:
        return int(self.weights.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[1])

    @classmethod
    def zeros(cls, num_features: int, num_classes: int) -> "ModelParams":
        return cls(weights=np.zeros((num_features, num_classes)), bias=np.zeros(num_classes))

    def same_shape(self, other: "ModelParams") -> bool:
        return self.weights.shape == other.weights.shape and self.bias.shape == other.bias.shape

    def digest(self) -> str:
        """Content hash, used to prove which updates touched a parameter set"""
        sha = hashlib.sha256()
        sha.update(self.weights.tobytes())
        sha.update(self.bias.tobytes())
        return sha.hexdigest()


class TrainState(Entity):
    student: ModelParams
    teacher: ModelParams
    step: int = 0
    ema_decay: float = 0.99
    learning_rate: float = 0.1

    @validator("step")
    def check_step(cls, value):
        assert value >= 0, "step must be >= 0"
        return value

    @validator("ema_decay")
    def check_decay(cls, value):
        assert 0.0 <= value < 1.0, f"ema_decay must be in [0, 1), got {value}"
        return value

    @validator("learning_rate")
    def check_lr(cls, value):
        assert value >= 0.0, f"learning_rate must be >= 0, got {value}"
        return value

    @root_validator(skip_on_failure=True)
    def check_twins(cls, values):
        assert values["student"].same_shape(values["teacher"]), "teacher and student shapes differ"
        return values


class Checkpoint(Entity):
    """Best-so-far parameters, keyed on validation mIoU"""

    state: TrainState
    epoch: int
    val_miou: float
