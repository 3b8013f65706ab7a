"""
Типы полей на сетке изображения

Хранение построчное: пиксель (i, j), i вниз, j вправо. Массивы копируются
при создании и помечаются только для чтения.
"""
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


def _frozen_array(value: Any, dtype) -> np.ndarray:
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


class _GridModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def height(self) -> int:
        return int(self.data.shape[-2])

    @property
    def width(self) -> int:
        return int(self.data.shape[-1])

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)


class ScalarField(_GridModel):
    """Вещественное значение на пиксель (изображение, вес, канал семян)"""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value: Any) -> np.ndarray:
        arr = _frozen_array(value, np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"ожидается 2-D массив, получено {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("поле содержит NaN/Inf")
        return arr


class RgbImage(_GridModel):
    """Цветное 8-битное изображение H×W×3"""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value: Any) -> np.ndarray:
        arr = np.asarray(value)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"ожидается массив H×W×3, получено {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("значения каналов вне [0,255]")
        return _frozen_array(arr, np.uint8)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    def channel(self, index: int) -> np.ndarray:
        return self.data[:, :, index].astype(np.float64)


class BinaryMask(_GridModel):
    """Маска объектов M"""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value: Any) -> np.ndarray:
        arr = _frozen_array(value, bool)
        if arr.ndim != 2:
            raise ValueError(f"ожидается 2-D маска, получено {arr.shape}")
        return arr

    @property
    def count(self) -> int:
        return int(self.data.sum())


class IndexField(_GridModel):
    """p-канальный стек полей: U, V или λ; форма (p, H, W)"""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value: Any) -> np.ndarray:
        arr = _frozen_array(value, np.float64)
        if arr.ndim == 2:
            arr = _frozen_array(arr[np.newaxis], np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(f"ожидается массив (p, H, W), получено {arr.shape}")
        return arr

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    def channel(self, index: int) -> ScalarField:
        return ScalarField(data=self.data[index])


class LabelImage(_GridModel):
    """Метки пикселей: -1 фон (вне маски), 0 шум/уровень фона, 1..K объекты"""

    data: np.ndarray

    @field_validator("data", mode="before")
    @classmethod
    def _check_data(cls, value: Any) -> np.ndarray:
        arr = _frozen_array(value, np.int64)
        if arr.ndim != 2:
            raise ValueError(f"ожидается 2-D массив меток, получено {arr.shape}")
        if arr.size and arr.min() < -1:
            raise ValueError("метки должны быть ≥ -1")
        return arr

    @property
    def count(self) -> int:
        return int(self.data.max()) if self.data.size and self.data.max() > 0 else 0
