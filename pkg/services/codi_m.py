"""
CODI-M: кластеризация p-мерного индекса плотностным DBSCAN
"""
import itertools
import logging
from collections import deque
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import settings
from imaging.models import BinaryMask, IndexField, LabelImage
from utils.errors import EmptyDomainError, ParameterError

logger = logging.getLogger(__name__)

# Элементов в одном блоке матрицы расстояний
DISTANCE_BLOCK = 1 << 22
BACKGROUND_LEVEL = 0.5
MIN_CHANNELS = 3


class PointSet(BaseModel):
    """Векторы индекса пикселей маски и их координаты (строка, столбец)"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    origin: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "PointSet":
        if self.points.ndim != 2:
            raise ValueError(f"ожидается массив (n, p), получено {self.points.shape}")
        if self.origin is not None and self.origin.shape != (len(self.points), 2):
            raise ValueError("координаты не соответствуют точкам")
        return self

    @classmethod
    def from_array(cls, points, origin=None) -> "PointSet":
        points = np.array(points, dtype=np.float64, copy=True)
        if points.ndim == 1:
            points = points[:, np.newaxis]
        if origin is not None:
            origin = np.array(origin, dtype=np.int64, copy=True)
        return cls(points=points, origin=origin)

    @property
    def dimension(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.points.shape[0])


class ClusterResult(BaseModel):
    """Метки точек: 0 - шум C_0, 1..K - кластеры"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    labels: np.ndarray
    count: int
    sizes: List[int] = Field(default_factory=list)
    noise_count: int = 0
    origin: Optional[np.ndarray] = None
    eps: float = 0.0
    min_pts: int = 1


class _Grid:
    """Равномерная сетка с ячейкой ε над точками"""

    def __init__(self, points: np.ndarray, eps: float):
        keys = np.floor(points / eps).astype(np.int64)
        cells, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        order = np.argsort(inverse, kind="stable")
        bounds = np.cumsum(np.bincount(inverse, minlength=len(cells)))[:-1]

        self.cell_of = inverse
        self.members: List[np.ndarray] = np.split(order, bounds)
        lookup: Dict[Tuple[int, ...], int] = {tuple(key): i for i, key in enumerate(cells.tolist())}
        offsets = list(itertools.product((-1, 0, 1), repeat=points.shape[1]))
        self.neighbors: List[List[int]] = []
        for key in cells.tolist():
            adjacent = (lookup.get(tuple(k + o for k, o in zip(key, offset))) for offset in offsets)
            self.neighbors.append([c for c in adjacent if c is not None])

    def candidates(self, cell: int) -> np.ndarray:
        return np.concatenate([self.members[c] for c in self.neighbors[cell]])


def _neighbor_counts(points: np.ndarray, grid: _Grid, eps2: float) -> np.ndarray:
    counts = np.zeros(len(points), dtype=np.int64)
    for cell, members in enumerate(grid.members):
        cand = grid.candidates(cell)
        step = max(1, DISTANCE_BLOCK // (len(cand) * points.shape[1]))
        for start in range(0, len(members), step):
            block = members[start:start + step]
            d2 = ((points[block, np.newaxis, :] - points[np.newaxis, cand, :]) ** 2).sum(axis=-1)
            counts[block] = (d2 <= eps2).sum(axis=1)
    return counts


def dbscan(pts: PointSet, eps: float = settings.DBSCAN_EPS, min_pts: int = settings.DBSCAN_MIN_PTS) -> ClusterResult:
    """
    DBSCAN с евклидовым расстоянием и замкнутой ε-окрестностью

    Ядро - точка, у которой не меньше min_pts соседей в пределах ε (включая
    её саму). Кластеры открываются в порядке номеров точек с первого
    непомеченного ядра; граничная точка достаётся первому дошедшему до
    неё кластеру.
    """
    if eps <= 0:
        raise ParameterError(f"ε должна быть > 0: {eps}")
    if min_pts < 1:
        raise ParameterError(f"MinPts должно быть ≥ 1: {min_pts}")
    n = len(pts)
    if n == 0:
        raise EmptyDomainError("Нет точек для кластеризации")

    points = pts.points
    eps2 = eps * eps
    grid = _Grid(points, eps)
    core = _neighbor_counts(points, grid, eps2) >= min_pts

    labels = np.zeros(n, dtype=np.int64)
    assigned = np.zeros(n, dtype=bool)
    # непомеченные точки каждой ячейки, сжимаются по ходу обхода
    remaining = [members.copy() for members in grid.members]

    cluster = 0
    for start in np.flatnonzero(core):
        if assigned[start]:
            continue
        cluster += 1
        labels[start] = cluster
        assigned[start] = True
        queue = deque([start])
        while queue:
            j = queue.popleft()
            for cell in grid.neighbors[grid.cell_of[j]]:
                rem = remaining[cell]
                rem = rem[~assigned[rem]]
                remaining[cell] = rem
                if rem.size == 0:
                    continue
                near = rem[((points[rem] - points[j]) ** 2).sum(axis=-1) <= eps2]
                labels[near] = cluster
                assigned[near] = True
                queue.extend(near[core[near]].tolist())

    sizes = np.bincount(labels, minlength=cluster + 1)
    logger.debug(f"DBSCAN: {n} точек, ε={eps}, MinPts={min_pts} → {cluster} кластер(ов)")
    return ClusterResult(
        labels=labels,
        count=cluster,
        sizes=sizes[1:].tolist(),
        noise_count=int(sizes[0]),
        origin=pts.origin,
        eps=eps,
        min_pts=min_pts,
    )


def point_set(U: IndexField, mask: BinaryMask) -> PointSet:
    """Векторы U(x) пикселей маски в построчном порядке"""
    if U.shape != mask.shape:
        raise ParameterError(f"Размеры поля {U.shape} и маски {mask.shape} не совпадают")
    return PointSet(points=U.data[:, mask.data].T.copy(), origin=np.argwhere(mask.data))


def count_multi(
    U: IndexField,
    mask: BinaryMask,
    eps: float = settings.DBSCAN_EPS,
    min_pts: int = settings.DBSCAN_MIN_PTS,
    background: float = BACKGROUND_LEVEL,
) -> ClusterResult:
    """
    Полный CODI-M по пикселям маски

    Точки, у которых все каналы ниже `background`, сразу идут в шум и в
    DBSCAN не попадают.
    """
    if U.channels < MIN_CHANNELS:
        raise ParameterError(f"CODI-M требует p ≥ {MIN_CHANNELS} каналов, получено {U.channels}")
    if mask.count == 0:
        raise EmptyDomainError("Пустая маска: кластеризовать нечего")

    pts = point_set(U, mask)
    if len(pts) > settings.DBSCAN_MAX_POINTS:
        logger.warning(
            f"⚠️ {len(pts)} точек больше порога {settings.DBSCAN_MAX_POINTS}, стоит уменьшить изображение"
        )

    active = np.any(pts.points >= background, axis=1)
    labels = np.zeros(len(pts), dtype=np.int64)
    count, sizes = 0, []
    if active.any():
        inner = dbscan(PointSet(points=pts.points[active]), eps, min_pts)
        labels[active] = inner.labels
        count, sizes = inner.count, inner.sizes

    result = ClusterResult(
        labels=labels,
        count=count,
        sizes=sizes,
        noise_count=int(np.count_nonzero(labels == 0)),
        origin=pts.origin,
        eps=eps,
        min_pts=min_pts,
    )
    logger.info(f"✅ CODI-M: {count} объект(ов), шум {result.noise_count}, ε={eps}, MinPts={min_pts}")
    return result


def label_image_multi(result: ClusterResult, dims: Tuple[int, int]) -> LabelImage:
    """Карта меток: -1 вне маски, 0 шум, 1..K кластеры"""
    if result.origin is None or len(result.origin) != len(result.labels):
        raise ParameterError("У результата кластеризации нет координат пикселей")
    data = np.full(dims, -1, dtype=np.int64)
    if len(result.origin):
        rows, cols = result.origin[:, 0], result.origin[:, 1]
        if rows.max() >= dims[0] or cols.max() >= dims[1]:
            raise ParameterError(f"Координаты точек вне размеров {dims}")
        data[rows, cols] = result.labels
    return LabelImage(data=data)
