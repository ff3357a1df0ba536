"""The most basic classes for all values flowing through the pipeline
"""
from abc import ABC

import numpy as np
from pydantic import BaseModel


def frozen_array(value, dtype=None) -> np.ndarray:
    """Private read-only copy, so grids can be shared across threads"""
    array = np.array(value, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class Entity(BaseModel, ABC):
    class Config:
        arbitrary_types_allowed = True
        allow_mutation = False
        copy_on_model_validation = "none"


class GridEntity(Entity, ABC):
    """A value carrying a row-major numpy payload in `data`"""

    data: np.ndarray

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def hw(self):
        return (self.height, self.width)

    def __eq__(self, other):
        if type(self) is not type(other):
            return False
        return self.data.dtype == other.data.dtype and np.array_equal(
            self.data, other.data
        )

    __hash__ = None  # type: ignore
