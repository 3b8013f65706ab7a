"""
Преобразования полей: яркость, уменьшение, рамка, выравнивание гистограммы
"""
import logging

import numpy as np
from PIL import Image
from skimage import exposure

from imaging.models import BinaryMask, IndexField, RgbImage, ScalarField
from utils.errors import ParameterError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
MIN_DOWNSAMPLED_SIDE = 8


def to_grayscale(img: RgbImage) -> ScalarField:
    """Яркость 0.299R + 0.587G + 0.114B"""
    luma = img.data.astype(np.float64) @ LUMA_WEIGHTS
    return ScalarField(data=np.clip(luma, 0.0, 255.0))


def to_rgb(field: ScalarField) -> RgbImage:
    """Серое поле в три одинаковых канала"""
    gray = np.clip(np.floor(field.data + 0.5), 0, 255).astype(np.uint8)
    return RgbImage(data=np.repeat(gray[:, :, np.newaxis], 3, axis=2))


def scale_length(length: int, factor: float, minimum: int = 0) -> int:
    """round(factor · length) с округлением половины вверх, не меньше minimum"""
    return max(minimum, int(np.floor(factor * length + 0.5)))


def downsample(field: ScalarField, factor: float) -> ScalarField:
    """
    Уменьшение усреднением по площади (box)

    Размеры результата round(factor · размер), не меньше 8×8.
    """
    if not 0.0 < factor <= 1.0:
        raise ParameterError(f"Коэффициент уменьшения вне (0,1]: {factor}")
    if factor == 1.0:
        return field

    new_height = scale_length(field.height, factor)
    new_width = scale_length(field.width, factor)
    if new_height < MIN_DOWNSAMPLED_SIDE or new_width < MIN_DOWNSAMPLED_SIDE:
        raise ParameterError(
            f"Слишком маленький результат {new_width}×{new_height} (минимум 8×8)"
        )

    img = Image.fromarray(field.data.astype(np.float32))
    resized = img.resize((new_width, new_height), resample=Image.Resampling.BOX)
    logger.info(
        f"ℹ️ Уменьшение {field.width}×{field.height} → {new_width}×{new_height}"
    )
    return ScalarField(data=np.asarray(resized, dtype=np.float64))


def add_border_outline(g: ScalarField, width: int) -> ScalarField:
    """Обнуляет внешние `width` колец пикселей, чтобы объекты не склеивались через периодический край"""
    if width < 1 or 2 * width >= min(g.height, g.width):
        raise ParameterError(f"Ширина рамки {width} вне [1, min(размеров)/2)")
    data = np.array(g.data)
    data[:width, :] = 0.0
    data[-width:, :] = 0.0
    data[:, :width] = 0.0
    data[:, -width:] = 0.0
    return ScalarField(data=data)


def normalize_channels(U: IndexField, mask: BinaryMask, top: float = 255.0) -> IndexField:
    """Масштабирует каждый канал так, чтобы максимум по маске стал `top`"""
    if U.shape != mask.shape:
        raise ParameterError(f"Размеры поля {U.shape} и маски {mask.shape} не совпадают")
    if mask.count == 0:
        return U
    data = np.array(U.data)
    for index in range(U.channels):
        peak = data[index][mask.data].max()
        if peak > 0:
            data[index] *= top / peak
        else:
            logger.warning(f"⚠️ Канал {index}: максимум по маске ≤ 0, нормировка пропущена")
    return IndexField(data=data)


def equalize_histogram(field: ScalarField) -> ScalarField:
    """Глобальное выравнивание гистограммы, результат в [0,255]"""
    if np.ptp(field.data) == 0:
        return field
    equalized = exposure.equalize_hist(field.data, nbins=256)
    return ScalarField(data=255.0 * equalized)
