"""
Регуляризованный k-means по размерам кластеров

E = λ·Σ 1/n_i + Σ_i Σ_{s ∈ I_i} (s − c_i)²

Минимум ищется точно: динамическим программированием по отсортированным
размерам, группы - отрезки отсортированного ряда.
"""
import asyncio
import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from config import settings
from utils.errors import EmptyDomainError, ParameterError

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


class SizeGroup(BaseModel):
    centroid: float
    count: int
    sizes: List[float]

    @property
    def low(self) -> float:
        return self.sizes[0]

    @property
    def high(self) -> float:
        return self.sizes[-1]


class SizeGrouping(BaseModel):
    """Разбиение размеров на k групп"""

    k: int
    groups: List[SizeGroup]
    energy: float
    lam: float = Field(ge=0)

    @property
    def inverse_count_sum(self) -> float:
        return float(sum(1.0 / g.count for g in self.groups))


class SweepPoint(BaseModel):
    lam: float
    k: int
    energy: float


class Plateau(BaseModel):
    k: int
    lam_low: float
    lam_high: float
    points: int

    @property
    def decades(self) -> float:
        return float(np.log10(self.lam_high / self.lam_low)) if self.lam_low > 0 else float("inf")


class LambdaSweep(BaseModel):
    points: List[SweepPoint]
    plateaus: List[Plateau]

    @property
    def ks(self) -> List[int]:
        return [p.k for p in self.points]


def default_lambda_grid() -> List[float]:
    return settings.lambda_grid


def _sorted_sizes(S: Sequence[float]) -> np.ndarray:
    x = np.sort(np.asarray(S, dtype=np.float64))
    if x.size == 0:
        raise EmptyDomainError("Пустое множество размеров")
    if not np.all(np.isfinite(x)):
        raise ParameterError("Размеры должны быть конечными")
    return x


def _segment_costs(x: np.ndarray, lam: float) -> np.ndarray:
    """cost[i, j] = λ/(j−i) + SSE(x[i:j]); inf при i ≥ j"""
    n = x.size
    p1 = np.concatenate(([0.0], np.cumsum(x)))
    p2 = np.concatenate(([0.0], np.cumsum(x * x)))
    i = np.arange(n + 1)[:, np.newaxis]
    j = np.arange(n + 1)[np.newaxis, :]
    length = (j - i).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = (p2[j] - p2[i]) - (p1[j] - p1[i]) ** 2 / length
        cost = lam / length + np.maximum(sse, 0.0)
    return np.where(j > i, cost, np.inf)


def grouping_energy(groups: Sequence[SizeGroup], lam: float) -> float:
    """Значение E для готового разбиения"""
    spread = sum(float(((np.asarray(g.sizes) - g.centroid) ** 2).sum()) for g in groups)
    return lam * sum(1.0 / g.count for g in groups) + spread


def _make_groups(x: np.ndarray, cuts: List[int]) -> List[SizeGroup]:
    groups = []
    for start, stop in zip(cuts, cuts[1:]):
        part = x[start:stop]
        groups.append(SizeGroup(centroid=float(part.mean()), count=int(part.size), sizes=part.tolist()))
    return groups


def regularized_kmeans(S: Sequence[float], lam: float) -> SizeGrouping:
    """
    Глобальный минимум E по k ∈ 1..|S| и всем разбиениям на отрезки

    best[k][j] - минимум по разбиениям первых j размеров на k групп.
    При равенстве энергий выбирается меньшее k.
    """
    if lam < 0:
        raise ParameterError(f"λ должна быть ≥ 0: {lam}")
    x = _sorted_sizes(S)
    n = x.size
    cost = _segment_costs(x, lam)

    best = np.full((n + 1, n + 1), np.inf)
    prev = np.zeros((n + 1, n + 1), dtype=np.int64)
    best[0, 0] = 0.0
    for k in range(1, n + 1):
        totals = best[k - 1][:, np.newaxis] + cost
        prev[k] = np.argmin(totals, axis=0)
        best[k] = totals[prev[k], np.arange(n + 1)]

    finals = best[1:, n]
    lowest = finals.min()
    k = int(np.flatnonzero(finals <= lowest + TIE_TOLERANCE * max(1.0, abs(lowest)))[0]) + 1

    cuts = [n]
    for level in range(k, 0, -1):
        cuts.append(int(prev[level, cuts[-1]]))
    groups = _make_groups(x, cuts[::-1])
    return SizeGrouping(k=k, groups=groups, energy=grouping_energy(groups, lam), lam=lam)


def find_plateaus(points: Sequence[SweepPoint]) -> List[Plateau]:
    """Максимальные отрезки сетки с одинаковым k, самые широкие первыми"""
    plateaus: List[Plateau] = []
    for point in points:
        if plateaus and plateaus[-1].k == point.k:
            last = plateaus[-1]
            plateaus[-1] = last.model_copy(update={"lam_high": point.lam, "points": last.points + 1})
        else:
            plateaus.append(Plateau(k=point.k, lam_low=point.lam, lam_high=point.lam, points=1))
    return sorted(plateaus, key=lambda p: (-p.points, p.k))


def _check_grid(grid: Sequence[float]) -> List[float]:
    grid = [float(v) for v in grid]
    if not grid:
        raise ParameterError("Пустая сетка λ")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ParameterError("Сетка λ должна строго возрастать")
    if grid[0] < 0:
        raise ParameterError("Значения λ должны быть ≥ 0")
    return grid


async def lambda_sweep_async(S: Sequence[float], grid: Optional[Sequence[float]] = None) -> LambdaSweep:
    """k(λ) по сетке; значения λ считаются параллельно"""
    grid = _check_grid(default_lambda_grid() if grid is None else grid)
    sizes = _sorted_sizes(S).tolist()
    semaphore = asyncio.Semaphore(settings.MAX_WORKERS)

    async def solve(lam: float) -> SizeGrouping:
        async with semaphore:
            return await asyncio.to_thread(regularized_kmeans, sizes, lam)

    results = await asyncio.gather(*(solve(lam) for lam in grid))
    points = [SweepPoint(lam=r.lam, k=r.k, energy=r.energy) for r in results]
    plateaus = find_plateaus(points)
    logger.info(
        f"✅ Перебор λ: {len(grid)} значений, плато k = {[p.k for p in plateaus[:3]]}"
    )
    return LambdaSweep(points=points, plateaus=plateaus)


def lambda_sweep(S: Sequence[float], grid: Optional[Sequence[float]] = None) -> LambdaSweep:
    return asyncio.run(lambda_sweep_async(S, grid))
