"""
Перебор параметров счётчиков: устойчивость K по σ (CODI-S) и по (MinPts, ε) (CODI-M)
"""
import asyncio
import logging
from typing import Dict, List, Sequence

import numpy as np

from config import settings
from imaging.models import BinaryMask, IndexField, ScalarField
from services.codi_m import count_multi
from services.codi_s import build_histogram, count_peaks, smooth_histogram
from utils.errors import ParameterError

logger = logging.getLogger(__name__)

DEFAULT_SIGMAS = np.round(np.linspace(0.05, 1.2, 24), 4).tolist()
DEFAULT_EPS = np.round(np.linspace(0.5, 1.8, 14), 4).tolist()
DEFAULT_MIN_PTS = list(range(2, 26))


def sweep_scalar(
    U: ScalarField,
    mask: BinaryMask,
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    radius: int = settings.HIST_RADIUS,
    min_prominence: float = 0.0,
) -> List[Dict[str, float]]:
    """K по σ при фиксированном радиусе; гистограмма строится один раз"""
    if not sigmas:
        raise ParameterError("Пустой список σ")
    histogram = build_histogram(U, mask)
    rows = []
    for sigma in sigmas:
        peaks = count_peaks(smooth_histogram(histogram, sigma, radius), min_prominence)
        rows.append({"sigma": float(sigma), "radius": radius, "count": peaks.count})
    logger.info(f"✅ Перебор σ: K ∈ {sorted({r['count'] for r in rows})}")
    return rows


async def sweep_multi_async(
    U: IndexField,
    mask: BinaryMask,
    eps_values: Sequence[float] = DEFAULT_EPS,
    min_pts_values: Sequence[int] = DEFAULT_MIN_PTS,
) -> List[Dict[str, float]]:
    """K на сетке (MinPts, ε); узлы сетки считаются параллельно"""
    if not eps_values or not min_pts_values:
        raise ParameterError("Пустая сетка (MinPts, ε)")
    semaphore = asyncio.Semaphore(settings.MAX_WORKERS)

    async def one(min_pts: int, eps: float) -> Dict[str, float]:
        async with semaphore:
            result = await asyncio.to_thread(count_multi, U, mask, eps, min_pts)
        return {"minpts": int(min_pts), "eps": float(eps), "count": result.count}

    grid = [(m, e) for m in min_pts_values for e in eps_values]
    rows = await asyncio.gather(*(one(m, e) for m, e in grid))
    logger.info(f"✅ Перебор (MinPts, ε): {len(rows)} узлов, K ∈ {sorted({r['count'] for r in rows})}")
    return list(rows)


def sweep_multi(
    U: IndexField,
    mask: BinaryMask,
    eps_values: Sequence[float] = DEFAULT_EPS,
    min_pts_values: Sequence[int] = DEFAULT_MIN_PTS,
) -> List[Dict[str, float]]:
    return asyncio.run(sweep_multi_async(U, mask, eps_values, min_pts_values))


def count_map(rows: Sequence[Dict[str, float]], row_key: str, col_key: str) -> np.ndarray:
    """Таблица K[строка, столбец] из строк перебора (как на картах параметров)"""
    row_values = sorted({r[row_key] for r in rows})
    col_values = sorted({r[col_key] for r in rows})
    table = np.full((len(row_values), len(col_values)), -1, dtype=np.int64)
    for r in rows:
        table[row_values.index(r[row_key]), col_values.index(r[col_key])] = r["count"]
    return table
