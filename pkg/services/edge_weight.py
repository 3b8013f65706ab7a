"""
Построение веса диффузии g(Φ0): функции края, пороги, морфология, маски
"""
import enum
import logging
import math
from typing import Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import ndimage
from skimage.morphology import disk

from imaging.models import BinaryMask, RgbImage, ScalarField
from utils.errors import DegenerateWeightError, ParameterError

logger = logging.getLogger(__name__)


class EdgeKind(str, enum.Enum):
    EXP = "exp"  # g̃(t) = exp(-τt²)
    RATIONAL = "rational"  # ḡ(t) = 1 / (1 + τt²)


class CompareOp(str, enum.Enum):
    LT = "lt"
    GT = "gt"


class MorphOp(str, enum.Enum):
    DILATE = "dilate"
    ERODE = "erode"


class EdgeWeight(BaseModel):
    """Вес g со значениями в [0,1] и его максимум G0"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    g: ScalarField
    G0: float

    @classmethod
    def from_array(cls, values: np.ndarray) -> "EdgeWeight":
        values = np.asarray(values, dtype=np.float64)
        if values.min() < 0.0 or values.max() > 1.0:
            raise ParameterError("Вес должен лежать в [0,1]")
        return cls(g=ScalarField(data=values), G0=float(values.max()))

    @property
    def support(self) -> BinaryMask:
        return BinaryMask(data=self.g.data > 0.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Нормированное дискретное гауссово ядро радиуса ⌈3σ⌉"""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    return kernel / kernel.sum()


def gaussian_smooth(field: ScalarField, sigma: float) -> ScalarField:
    """Сепарабельная свёртка с усечённым гауссовым ядром, края повторяются"""
    if sigma <= 0:
        raise ParameterError(f"σ должна быть > 0: {sigma}")
    kernel = gaussian_kernel(sigma)
    if kernel.size == 1:
        return field
    smoothed = ndimage.correlate1d(field.data, kernel, axis=0, mode="nearest")
    smoothed = ndimage.correlate1d(smoothed, kernel, axis=1, mode="nearest")
    return ScalarField(data=smoothed)


def gradient_magnitude(field: ScalarField) -> np.ndarray:
    """|∇f| центральными разностями с повтором края, шаг сетки 1"""
    padded = np.pad(field.data, 1, mode="edge")
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    return np.hypot(gx, gy)


def edge_function(
    field: ScalarField,
    kind: Union[EdgeKind, str] = EdgeKind.RATIONAL,
    tau: float = 10.0,
    sigma: float = 1.0,
) -> EdgeWeight:
    """g̃ или ḡ от |∇(G_σ ∗ f)|; σ = 0 отключает сглаживание"""
    kind = EdgeKind(kind)
    if tau <= 0:
        raise ParameterError(f"τ должна быть > 0: {tau}")
    if sigma < 0:
        raise ParameterError(f"σ должна быть ≥ 0: {sigma}")
    smoothed = gaussian_smooth(field, sigma) if sigma > 0 else field
    t2 = gradient_magnitude(smoothed) ** 2
    if kind is EdgeKind.EXP:
        values = np.exp(-tau * t2)
    else:
        values = 1.0 / (1.0 + tau * t2)
    return EdgeWeight.from_array(values)


def threshold_mask(field: Union[ScalarField, EdgeWeight], op: Union[CompareOp, str], t: float) -> BinaryMask:
    """Поточечный индикатор χ_{f<t} или χ_{f>t}"""
    data = field.g.data if isinstance(field, EdgeWeight) else field.data
    op = CompareOp(op)
    return BinaryMask(data=data < t if op is CompareOp.LT else data > t)


def morphology(mask: BinaryMask, op: Union[MorphOp, str], radius: int) -> BinaryMask:
    """Дилатация/эрозия евклидовым диском; вне изображения считается False"""
    if radius < 1:
        raise ParameterError(f"Радиус структурного элемента должен быть ≥ 1: {radius}")
    op = MorphOp(op)
    footprint = disk(radius).astype(bool)
    if op is MorphOp.DILATE:
        result = ndimage.binary_dilation(mask.data, structure=footprint)
    else:
        result = ndimage.binary_erosion(mask.data, structure=footprint, border_value=0)
    return BinaryMask(data=result)


def channel_subtract(img: RgbImage, a: int, b: int) -> ScalarField:
    """Канал a минус канал b с обрезкой в [0,255]"""
    for index in (a, b):
        if index not in (0, 1, 2):
            raise ParameterError(f"Номер канала вне 0..2: {index}")
    return ScalarField(data=np.clip(img.channel(a) - img.channel(b), 0.0, 255.0))


def compose_weight(parts: Sequence[Union[EdgeWeight, BinaryMask]]) -> EdgeWeight:
    """Поточечное произведение весов и масок; G0 пересчитывается"""
    if not parts:
        raise ParameterError("Нужна хотя бы одна часть веса")
    shapes = {part.g.shape if isinstance(part, EdgeWeight) else part.shape for part in parts}
    if len(shapes) != 1:
        raise ParameterError(f"Размеры частей не совпадают: {sorted(shapes)}")

    product = np.ones(next(iter(shapes)))
    for part in parts:
        product = product * (part.g.data if isinstance(part, EdgeWeight) else part.data.astype(np.float64))

    weight = EdgeWeight.from_array(product)
    if weight.G0 <= 0.0:
        raise DegenerateWeightError("Вес тождественно равен нулю (G0 = 0)")
    logger.debug(f"Вес собран из {len(parts)} частей, G0={weight.G0:.4f}")
    return weight
