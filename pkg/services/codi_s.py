"""
CODI-S: подсчёт по пикам сглаженной гистограммы скалярного индекса
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import find_peaks

from config import settings
from imaging.models import BinaryMask, LabelImage, ScalarField
from utils.errors import EmptyDomainError, ParameterError

logger = logging.getLogger(__name__)

LEVELS = 256
SIGMA_RANGE = (0.05, 1.2)


class IndexHistogram(BaseModel):
    """Гистограмма уровней индекса h(r_k) и её сглаженная версия"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    bins: np.ndarray
    total: int
    smoothed: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    radius: Optional[int] = None


class PeakResult(BaseModel):
    count: int
    peaks: List[int]
    minima: List[int]


class ScalarCount(BaseModel):
    """Итог CODI-S для одного индексного поля"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    count: int
    peaks: List[int]
    minima: List[int]
    histogram: IndexHistogram
    labels: LabelImage
    sizes: List[int] = Field(default_factory=list)


def quantize_levels(values: np.ndarray) -> np.ndarray:
    """Ближайший уровень в [0,255], половина округляется вверх"""
    return np.clip(np.floor(values + 0.5), 0, LEVELS - 1).astype(np.int64)


def build_histogram(U: ScalarField, mask: BinaryMask) -> IndexHistogram:
    """h(r_k): число пикселей маски на каждом уровне"""
    if U.shape != mask.shape:
        raise ParameterError(f"Размеры поля {U.shape} и маски {mask.shape} не совпадают")
    if mask.count == 0:
        raise EmptyDomainError("Пустая маска: гистограмму строить не по чему")
    levels = quantize_levels(U.data[mask.data])
    bins = np.bincount(levels, minlength=LEVELS)
    bins.setflags(write=False)
    return IndexHistogram(bins=bins, total=int(levels.size))


def smoothing_matrix(sigma: float, radius: int, size: int = LEVELS - 1) -> np.ndarray:
    """
    Матрица size×size свёртки с ядром p(i) ∝ exp(−i²/2σ²), |i| ≤ r

    Столбец s - ядро с центром в s, усечённое по краям и заново
    нормированное, поэтому масса сохраняется.
    """
    offsets = np.arange(size)[:, np.newaxis] - np.arange(size)[np.newaxis, :]
    matrix = np.where(np.abs(offsets) <= radius, np.exp(-offsets ** 2 / (2.0 * sigma ** 2)), 0.0)
    return matrix / matrix.sum(axis=0, keepdims=True)


def smooth_histogram(h: IndexHistogram, sigma: float = settings.HIST_SIGMA, r: int = settings.HIST_RADIUS) -> IndexHistogram:
    """
    Дискретный гауссов фильтр по уровням; сырые бины сохраняются

    Сглаживаются уровни 1..255, бин фона 0 переносится как есть.
    """
    if sigma <= 0:
        raise ParameterError(f"σ должна быть > 0: {sigma}")
    if r < 1:
        raise ParameterError(f"Радиус ядра должен быть ≥ 1: {r}")
    if not SIGMA_RANGE[0] <= sigma <= SIGMA_RANGE[1]:
        logger.warning(f"⚠️ σ={sigma} вне рекомендуемого диапазона {SIGMA_RANGE}")
    bins = h.bins.astype(np.float64)
    smoothed = np.concatenate(([bins[0]], smoothing_matrix(sigma, r) @ bins[1:]))
    smoothed.setflags(write=False)
    return h.model_copy(update={"smoothed": smoothed, "sigma": sigma, "radius": r})


def count_peaks(h: IndexHistogram, min_prominence: float = 0.0) -> PeakResult:
    """
    Число строгих локальных максимумов сглаженной кривой без бина 0

    Плато считается одним максимумом, крайние бины тоже могут быть
    максимумами. min_prominence - доля от наибольшего значения кривой.
    Между соседними пиками возвращается бин минимума.
    """
    if h.smoothed is None:
        raise ParameterError("Гистограмма не сглажена")
    curve = np.asarray(h.smoothed[1:], dtype=np.float64)
    top = curve.max() if curve.size else 0.0
    if top <= 0.0:
        raise EmptyDomainError("Кривая гистограммы нулевая (вне уровня фона пикселей нет)")

    padded = np.concatenate(([-1.0], curve, [-1.0]))
    prominence = min_prominence * top if min_prominence > 0 else None
    found, _ = find_peaks(padded, prominence=prominence)
    # индекс в padded совпадает с номером бина
    peaks = [int(i) for i in found]
    minima = [
        int(left + np.argmin(h.smoothed[left:right + 1]))
        for left, right in zip(peaks, peaks[1:])
    ]
    return PeakResult(count=len(peaks), peaks=peaks, minima=minima)


def label_pixels_1d(U: ScalarField, mask: BinaryMask, minima: List[int]) -> LabelImage:
    """-1 вне маски, 0 на уровне фона, иначе номер интервала между минимумами"""
    if list(minima) != sorted(minima):
        raise ParameterError("Минимумы должны быть отсортированы")
    levels = quantize_levels(U.data)
    labels = np.searchsorted(np.asarray(minima, dtype=np.int64), levels, side="left") + 1
    labels = np.where(levels == 0, 0, labels)
    labels = np.where(mask.data, labels, -1)
    return LabelImage(data=labels)


def cluster_sizes(labels: LabelImage, count: int) -> List[int]:
    """Число пикселей в каждом кластере 1..count"""
    data = labels.data
    return np.bincount(data[data > 0], minlength=count + 1)[1:count + 1].tolist()


def count_scalar(
    U: ScalarField,
    mask: BinaryMask,
    sigma: float = settings.HIST_SIGMA,
    r: int = settings.HIST_RADIUS,
    min_prominence: float = 0.0,
) -> ScalarCount:
    """Полный CODI-S: гистограмма → сглаживание → пики → метки"""
    histogram = smooth_histogram(build_histogram(U, mask), sigma, r)
    peaks = count_peaks(histogram, min_prominence)
    labels = label_pixels_1d(U, mask, peaks.minima)
    logger.info(f"✅ CODI-S: {peaks.count} объект(ов), σ={sigma}, r={r}")
    return ScalarCount(
        count=peaks.count,
        peaks=peaks.peaks,
        minima=peaks.minima,
        histogram=histogram,
        labels=labels,
        sizes=cluster_sizes(labels, peaks.count),
    )
