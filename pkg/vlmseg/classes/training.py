"""Per-epoch training records
"""
from typing import List, Optional

import numpy as np
from pydantic import validator

from .entity import Entity
from .purify import PurifyStats


class EpochLog(Entity):
    epoch: int
    step: int
    loss_s: float
    """Mean supervised loss over the epoch's iterations"""
    loss_u: float
    loss: float
    pseudo_label_miou: Optional[float] = None
    """Labels fed to the student (purified when train.vlmpp is on) vs ground truth, valid pixels only"""
    teacher_raw_miou: Optional[float] = None
    """Raw teacher pseudo-labels vs ground truth"""
    student_pseudo_miou: Optional[float] = None
    """Student predictions on the same weak views vs ground truth"""
    val_miou: Optional[float] = None
    """Of the evaluated model"""
    student_val_miou: Optional[float] = None
    teacher_val_miou: Optional[float] = None
    val_class_iou: List[Optional[float]] = []
    purify: PurifyStats = PurifyStats()

    @validator("loss_s", "loss_u", "loss")
    def check_loss(cls, value):
        assert np.isfinite(value) and value >= 0.0, f"losses must be finite and >= 0, got {value}"
        return value
