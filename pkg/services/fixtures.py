"""
Синтетические тестовые изображения (объекты 255, фон 0)
"""
import logging
from typing import Callable, Dict

import numpy as np

from imaging.models import ScalarField
from utils.errors import ParameterError

logger = logging.getLogger(__name__)

OBJECT = 255.0


def two_squares(side: int = 13, margin: int = 3, wall: int = 3, opening: int = 1) -> ScalarField:
    """Два квадрата, разделённые стенкой толщины `wall` с проёмом высоты `opening` по центру"""
    if opening > side:
        raise ParameterError(f"Проём {opening} больше стороны квадрата {side}")
    height = 2 * margin + side
    width = 2 * margin + 2 * side + wall
    data = np.zeros((height, width))
    rows = slice(margin, margin + side)
    data[rows, margin:margin + side] = OBJECT
    data[rows, margin + side + wall:margin + 2 * side + wall] = OBJECT
    if opening > 0:
        top = margin + (side - opening) // 2
        data[top:top + opening, margin + side:margin + side + wall] = OBJECT
    return ScalarField(data=data)


def two_squares_sized(height: int, width: int, wall: int, opening: int) -> ScalarField:
    """Два квадрата в кадре заданного размера (поля равны по всем сторонам)"""
    margin, rest = divmod(2 * height - width + wall, 2)
    side = height - 2 * margin
    if rest or margin < 0 or side < 1:
        raise ParameterError(f"Кадр {width}×{height} не раскладывается на два квадрата со стенкой {wall}")
    return two_squares(side=side, margin=margin, wall=wall, opening=opening)


def ten_squares(side: int = 6) -> ScalarField:
    """Десять квадратов 2×5 в кадре 126×127"""
    data = np.zeros((126, 127))
    for top in (32, 80):
        for left in (8, 32, 56, 80, 104):
            data[top:top + side, left:left + side] = OBJECT
    return ScalarField(data=data)


def hexagons(radius: int = 20, count: int = 6, gap: int = 6, margin: int = 4) -> ScalarField:
    """Ряд правильных шестиугольников с плоским верхом"""
    half_height = np.sqrt(3.0) / 2.0 * radius
    height = int(np.ceil(2 * half_height)) + 2 * margin + 1
    pitch = 2 * radius + gap
    width = count * pitch - gap + 2 * margin + 1
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cy = (height - 1) / 2.0
    data = np.zeros((height, width))
    for k in range(count):
        cx = margin + radius + k * pitch
        dx = np.abs(xx - cx)
        dy = np.abs(yy - cy)
        inside = (dy <= half_height) & (np.sqrt(3.0) * dx + dy <= np.sqrt(3.0) * radius)
        data[inside] = OBJECT
    return ScalarField(data=data)


def three_cells(opening: int = 0, radius: int = 9) -> ScalarField:
    """Три диска в ряд; `opening` > 0 соединяет соседние диски перемычкой"""
    height, width = 24, 64
    yy, xx = np.mgrid[0:height, 0:width]
    data = np.zeros((height, width))
    centers = [(12, 12), (12, 32), (12, 52)]
    for cy, cx in centers:
        data[(yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2] = OBJECT
    if opening > 0:
        top = 12 - opening // 2
        data[top:top + opening, 12:52] = np.maximum(data[top:top + opening, 12:52], OBJECT)
    return ScalarField(data=data)


def square_grid(rows: int = 10, cols: int = 20, side: int = 16, pitch: int = 24, margin: int = 8) -> ScalarField:
    """
    Регулярная сетка rows×cols квадратов, по умолчанию 488×248

    Все размеры кратны 4: при уменьшении в 2 и 4 раза края квадратов
    попадают на границы пикселей, а квадрат 4×4 ещё набирает MinPts.
    """
    data = np.zeros((2 * margin + (rows - 1) * pitch + side, 2 * margin + (cols - 1) * pitch + side))
    for i in range(rows):
        for j in range(cols):
            top, left = margin + i * pitch, margin + j * pitch
            data[top:top + side, left:left + side] = OBJECT
    return ScalarField(data=data)


FIXTURES: Dict[str, Callable[[], ScalarField]] = {
    "two-squares-a": lambda: two_squares_sized(47, 91, wall=15, opening=9),
    "two-squares-b": lambda: two_squares_sized(47, 91, wall=3, opening=9),
    "two-squares-c": lambda: two_squares_sized(47, 91, wall=3, opening=21),
    "ten-squares": ten_squares,
    "hexagons": hexagons,
    "three-cells": three_cells,
    "grid": square_grid,
}


def make_fixture(name: str) -> ScalarField:
    """Фикстура по имени"""
    try:
        builder = FIXTURES[name]
    except KeyError:
        raise ParameterError(
            f"Неизвестная фикстура '{name}'. Доступны: {', '.join(sorted(FIXTURES))}"
        ) from None
    field = builder()
    logger.info(f"✅ Фикстура {name}: {field.width}×{field.height}")
    return field
