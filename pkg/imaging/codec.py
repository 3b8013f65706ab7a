"""
Чтение и запись изображений (PGM/PPM/PNG) через Pillow
"""
import io
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, ImageColor, UnidentifiedImageError

from imaging.models import LabelImage, RgbImage, ScalarField
from utils.errors import ImageFormatError, ImageIOError

logger = logging.getLogger(__name__)

# Pillow отдаёт PGM и PPM под общим именем формата "PPM"
SUPPORTED_FORMATS = {"PPM", "PNG"}

BACKGROUND_COLOR = (0, 0, 0)
NOISE_COLOR = (128, 128, 128)


def load_image(path: Union[str, Path]) -> RgbImage:
    """Загружает PGM/PPM/PNG; серые изображения размножаются в три канала"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ImageIOError(f"Не удалось прочитать {path}: {e}") from e

    try:
        with Image.open(io.BytesIO(raw)) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise ImageFormatError(f"Неподдерживаемый формат {img.format}: {path}")
            img.load()
            if img.mode in ("I", "I;16", "I;16B", "F"):
                raise ImageFormatError(f"Глубина больше 8 бит не поддерживается: {path}")
            if img.mode in ("1", "L", "LA"):
                gray = np.asarray(img.convert("L"), dtype=np.uint8)
                data = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
            else:
                data = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, SyntaxError, OSError, ValueError) as e:
        raise ImageFormatError(f"Повреждённое изображение {path}: {e}") from e

    logger.debug(f"Загружено {path}: {data.shape[1]}×{data.shape[0]}")
    return RgbImage(data=data)


def quantize(values: np.ndarray) -> np.ndarray:
    """Округление вверх от половины и обрезка в [0,255]"""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def label_palette(count: int) -> List[Tuple[int, int, int]]:
    """Цвета меток 1..count (золотой угол по оттенку)"""
    colors = []
    for i in range(count):
        hue = int(round((i * 137.508) % 360))
        colors.append(ImageColor.getrgb(f"hsv({hue},85%,95%)"))
    return colors


def colorize_labels(labels: LabelImage) -> np.ndarray:
    """Раскраска меток: фон чёрный, шум серый, объекты по палитре"""
    data = labels.data
    rgb = np.zeros(data.shape + (3,), dtype=np.uint8)
    rgb[data == 0] = NOISE_COLOR
    for index, color in enumerate(label_palette(labels.count), start=1):
        rgb[data == index] = color
    return rgb


def save_field(field: Union[ScalarField, LabelImage], path: Union[str, Path]) -> None:
    """Сохраняет скалярное поле как PGM или метки как цветной PPM"""
    path = Path(path)
    if isinstance(field, LabelImage):
        img = Image.fromarray(colorize_labels(field))
    else:
        img = Image.fromarray(quantize(field.data))
    try:
        img.save(path, format="PPM")
    except OSError as e:
        raise ImageIOError(f"Не удалось записать {path}: {e}") from e
    logger.debug(f"Сохранено {path}")
