"""
Диффузия индексов: ADMM для взвешенной гармонической модели

    U-шаг: F^{-1}[F(θU + 2∇·((g−G0)∇U) + μV + λ) / D]
    V-шаг: clip((η_D·U0 + μU − λ) / (η_D + μ), a, b)
    λ-шаг: λ + μ(V − U)

Градиент - прямые разности, дивергенция - обратные (минус сопряжённый),
обе с периодическим краем, как у символа D в FFT.
"""
import asyncio
import enum
import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg

from config import settings
from imaging.models import BinaryMask, IndexField, ScalarField
from services.edge_weight import EdgeWeight
from services.seeding import SeedImage
from utils.errors import (
    CodiError,
    DegenerateWeightError,
    InsufficientHistoryError,
    NumericalDivergenceError,
    ParameterError,
)

logger = logging.getLogger(__name__)

MAX_ORACLE_SIDE = 32
IMAG_TOLERANCE = 1e-9
INDEX_SCALE = 255.0  # шкала индекса после нормировки каналов


class FidelityMode(str, enum.Enum):
    SEEDS = "seeds"  # η на D ∩ M
    LITERAL = "literal"  # η на D^c ∩ M


class SolverParams(BaseModel):
    """Параметры ADMM"""

    model_config = ConfigDict(frozen=True)

    mu: float = Field(default=settings.DIFFUSION_MU, gt=0)
    theta: float = Field(default=settings.DIFFUSION_THETA, gt=0)
    eta: float = Field(default=settings.DIFFUSION_ETA, gt=0)
    a: float = Field(default=settings.DIFFUSION_CLAMP_LOW, gt=0)
    b: float = Field(default=settings.DIFFUSION_CLAMP_HIGH, le=255)
    r_stop: float = Field(default=settings.DIFFUSION_R_STOP, gt=0, lt=1)
    max_iters: int = Field(default=settings.DIFFUSION_MAX_ITERS, ge=1)
    settle: float = Field(default=settings.DIFFUSION_SETTLE, ge=0)  # в уровнях нормированного индекса; 0 - только R_n
    fidelity: FidelityMode = FidelityMode.SEEDS
    check_feasibility: bool = settings.DIFFUSION_CHECK_FEASIBILITY

    @model_validator(mode="after")
    def _check_bounds(self) -> "SolverParams":
        if not self.a < self.b:
            raise ValueError(f"нужно a < b, получено a={self.a}, b={self.b}")
        return self


class SpectralOperator(BaseModel):
    """Символ D = (θ+μ) − 2·G0·λΔ в частотной области"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    denominator: np.ndarray
    G0: float


class ChannelTrace(BaseModel):
    """
    Трассы одного канала; элемент n относится к итерации n+1

    energy - цель U-подзадачи без проксимального члена (см. subproblem_energy),
    du_max - наибольшее |U^n − U^{n−1}| по маске.
    """

    energy_initial: float = 0.0
    energy: List[float] = Field(default_factory=list)
    rn: List[float] = Field(default_factory=list)
    du: List[float] = Field(default_factory=list)
    dv: List[float] = Field(default_factory=list)
    dlam: List[float] = Field(default_factory=list)
    lyapunov: List[float] = Field(default_factory=list)
    du_max: List[float] = Field(default_factory=list)
    u_first_norm: float = 0.0
    stage_iters: Dict[float, int] = Field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.energy)


class DiffusionState(BaseModel):
    """Итерации (U, V, λ) и их трассы по каналам"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    U: IndexField
    V: IndexField
    lam: IndexField
    k: int = 0
    traces: List[ChannelTrace] = Field(default_factory=list)
    stages: Dict[float, IndexField] = Field(default_factory=dict)
    params: Optional[SolverParams] = None

    @property
    def energy_trace(self) -> List[List[float]]:
        return [t.energy for t in self.traces]

    @property
    def rn_trace(self) -> List[List[float]]:
        return [t.rn for t in self.traces]


class ChannelReport(BaseModel):
    channel: int
    iterations: int
    lyapunov_monotone: bool
    energy_monotone: bool
    violations: List[int] = Field(default_factory=list)
    final_du: float
    final_dv: float
    final_dlam: float
    relative_du: float


class ConvergenceReport(BaseModel):
    channels: List[ChannelReport]

    @property
    def ok(self) -> bool:
        return all(c.lyapunov_monotone for c in self.channels)


# ---------------------------------------------------------------------------
# Дискретные операторы


def grad(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Прямые разности с периодическим краем: (∂x, ∂y)"""
    return np.roll(u, -1, axis=1) - u, np.roll(u, -1, axis=0) - u


def div(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Обратные разности: ∇· = −∇ᵀ"""
    return px - np.roll(px, 1, axis=1) + py - np.roll(py, 1, axis=0)


def laplacian_symbol(height: int, width: int) -> np.ndarray:
    """Символ периодического 5-точечного лапласиана"""
    k1 = np.arange(height)[:, np.newaxis]
    k2 = np.arange(width)[np.newaxis, :]
    return 2.0 * np.cos(2.0 * np.pi * k1 / height) + 2.0 * np.cos(2.0 * np.pi * k2 / width) - 4.0


def weighted_dirichlet(u: np.ndarray, g: np.ndarray) -> float:
    """Σ g·|∇u|²"""
    dx, dy = grad(u)
    return float(np.sum(g * (dx * dx + dy * dy)))


# ---------------------------------------------------------------------------
# Шаги ADMM


def build_spectral_operator(width: int, height: int, params: SolverParams, G0: float) -> SpectralOperator:
    """D(k1,k2) = (θ+μ) − 2·G0·(2cos(2πk1/H) + 2cos(2πk2/W) − 4)"""
    if width < 2 or height < 2:
        raise ParameterError(f"Сетка должна быть не меньше 2×2: {width}×{height}")
    if G0 <= 0:
        raise DegenerateWeightError(f"G0 должно быть > 0: {G0}")
    denominator = (params.theta + params.mu) - 2.0 * G0 * laplacian_symbol(height, width)
    denominator.setflags(write=False)
    return SpectralOperator(denominator=denominator, G0=float(G0))


def spectral_solve(rhs: np.ndarray, op: SpectralOperator) -> np.ndarray:
    """Решение ((θ+μ)I − 2G0Δ)x = rhs через FFT"""
    solution = np.fft.ifft2(np.fft.fft2(rhs) / op.denominator)
    residue = np.abs(solution.imag).max()
    scale = np.linalg.norm(rhs) + 1e-300
    if residue > IMAG_TOLERANCE * scale:
        raise NumericalDivergenceError(f"Мнимый остаток {residue:.3e} после обратного FFT")
    return solution.real


def build_u_rhs(u: np.ndarray, v: np.ndarray, lam: np.ndarray, g: np.ndarray, G0: float, params: SolverParams) -> np.ndarray:
    """θU + 2∇·((g−G0)∇U) + μV + λ"""
    dx, dy = grad(u)
    correction = div((g - G0) * dx, (g - G0) * dy)
    return params.theta * u + 2.0 * correction + params.mu * v + lam


def _u_step(u, v, lam, g, op, params):
    new_u = spectral_solve(build_u_rhs(u, v, lam, g, op.G0, params), op)
    if not np.all(np.isfinite(new_u)):
        raise NumericalDivergenceError("U содержит NaN/Inf")
    return new_u


def _v_step(u, lam, u0, eta_d, params):
    gamma = (eta_d * u0 + params.mu * u - lam) / (eta_d + params.mu)
    return np.clip(gamma, params.a, params.b)


def _lambda_step(lam, u, v, params):
    return lam + params.mu * (v - u)


def u_update(state: DiffusionState, seed: SeedImage, g: EdgeWeight, op: SpectralOperator, params: SolverParams) -> IndexField:
    """U-шаг для всех каналов"""
    channels = [
        _u_step(state.U.data[c], state.V.data[c], state.lam.data[c], g.g.data, op, params)
        for c in range(state.U.channels)
    ]
    return IndexField(data=np.stack(channels))


def v_update(state: DiffusionState, seed: SeedImage, eta_field: ScalarField, params: SolverParams) -> IndexField:
    """Проекция на Γ = {a ≤ V ≤ b}"""
    return IndexField(data=_v_step(state.U.data, state.lam.data, seed.channels.data, eta_field.data, params))


def lambda_update(state: DiffusionState, params: SolverParams) -> IndexField:
    """λ ← λ + μ(V − U)"""
    return IndexField(data=_lambda_step(state.lam.data, state.U.data, state.V.data, params))


def fidelity_field(seed: SeedImage, mask: BinaryMask, params: SolverParams) -> ScalarField:
    """η_D: η на носителе верности внутри маски, 0 вне его"""
    if params.fidelity is FidelityMode.SEEDS:
        support = seed.seeded.data & mask.data
    else:
        support = ~seed.seeded.data & mask.data
    return ScalarField(data=np.where(support, params.eta, 0.0))


def objective_energy(U: IndexField, seed: SeedImage, g: EdgeWeight, eta_field: ScalarField) -> float:
    """Σ_c [Σ g|∇U|² + ½ Σ η_D (U − U0)²]"""
    total = 0.0
    for c in range(U.channels):
        diff = U.data[c] - seed.channels.data[c]
        total += weighted_dirichlet(U.data[c], g.g.data) + 0.5 * float(np.sum(eta_field.data * diff * diff))
    return total


def subproblem_energy(u: np.ndarray, v: np.ndarray, lam: np.ndarray, g: np.ndarray, params: SolverParams) -> float:
    """
    Цель U-подзадачи без проксимального члена; это E_n в трассе и в R_n

        E_n = Σ g|∇U^n|² + ⟨λ^{n−1}, V^{n−1} − U^n⟩ + μ/2 ‖V^{n−1} − U^n‖²
    """
    gap = v - u
    return weighted_dirichlet(u, g) + float(np.sum(lam * gap)) + 0.5 * params.mu * float(np.sum(gap * gap))


def surrogate_energy(u, u_prev, v, lam, g, G0, params: SolverParams) -> float:
    """Цель U-шага с проксимальным членом: E + ½‖U − U^k‖²_P; в трассу не пишется"""
    return subproblem_energy(u, v, lam, g, params) + 0.5 * proximal_norm_sq(u - u_prev, g, G0, params)


def proximal_norm_sq(d: np.ndarray, g: np.ndarray, G0: float, params: SolverParams) -> float:
    """‖d‖²_P = θ‖d‖² + 2 Σ (G0 − g)|∇d|²"""
    dx, dy = grad(d)
    return params.theta * float(np.sum(d * d)) + 2.0 * float(np.sum((G0 - g) * (dx * dx + dy * dy)))


def relative_change(current: float, previous: float) -> float:
    """R_n = |E_n − E_{n−1}| / |E_{n−1}|"""
    if previous == 0.0:
        return 0.0 if current == 0.0 else math.inf
    return abs(current - previous) / abs(previous)


def settled(du_max: float, u: np.ndarray, region: np.ndarray, params: SolverParams) -> bool:
    """Изменение за итерацию меньше settle уровня на шкале, где максимум |U| по маске равен 255"""
    if params.settle == 0:
        return True
    peak = float(np.abs(u[region]).max()) if region.any() else 0.0
    return du_max <= params.settle * peak / INDEX_SCALE


# ---------------------------------------------------------------------------
# Итерация


class _ChannelRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    u: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    trace: ChannelTrace
    snapshots: Dict[float, np.ndarray]


def _run_channel(
    channel: int,
    u0: np.ndarray,
    eta_d: np.ndarray,
    g: np.ndarray,
    op: SpectralOperator,
    params: SolverParams,
    stop: float,
    stages: Sequence[float],
    region: np.ndarray,
) -> _ChannelRun:
    """
    Итерации одного канала

    Выход по R_n ≤ stop только когда индекс на маске устоялся:
    max|dU| ≤ settle · max|U| / 255, т.е. меньше settle уровня после нормировки.
    Ступени `stages` снимаются по одному R_n.
    """
    u = u0.copy()
    v = np.zeros_like(u0)
    lam = np.zeros_like(u0)
    trace = ChannelTrace(energy_initial=subproblem_energy(u, v, lam, g, params))
    snapshots: Dict[float, np.ndarray] = {}
    previous = trace.energy_initial

    for n in range(1, params.max_iters + 1):
        new_u = _u_step(u, v, lam, g, op, params)
        energy = subproblem_energy(new_u, v, lam, g, params)
        new_v = _v_step(new_u, lam, u0, eta_d, params)
        if params.check_feasibility and (new_v.min() < params.a or new_v.max() > params.b):
            raise NumericalDivergenceError(f"V вышло за [a,b] на итерации {n}")
        new_lam = _lambda_step(lam, new_u, new_v, params)

        du, dv, dlam = new_u - u, new_v - v, new_lam - lam
        rn = relative_change(energy, previous)
        trace.energy.append(energy)
        trace.rn.append(rn)
        trace.du.append(float(np.linalg.norm(du)))
        trace.dv.append(float(np.linalg.norm(dv)))
        trace.dlam.append(float(np.linalg.norm(dlam)))
        trace.lyapunov.append(
            proximal_norm_sq(du, g, op.G0, params)
            + params.mu * float(np.sum(dv * dv))
            + float(np.sum(dlam * dlam)) / params.mu
        )
        du_max = float(np.abs(du[region]).max()) if region.any() else 0.0
        trace.du_max.append(du_max)
        if n == 1:
            trace.u_first_norm = float(np.linalg.norm(new_u))
        logger.debug(f"канал {channel}, итерация {n}: E={energy:.6e}, R={rn:.4e}, max|dU|={du_max:.3e}")

        u, v, lam, previous = new_u, new_v, new_lam, energy
        for stage in stages:
            if stage not in snapshots and rn <= stage:
                snapshots[stage] = u.copy()
                trace.stage_iters[stage] = n
        if rn <= stop and settled(du_max, new_u, region, params):
            break

    return _ChannelRun(u=u, v=v, lam=lam, trace=trace, snapshots=snapshots)


async def run_diffusion_async(
    seed: SeedImage,
    g: EdgeWeight,
    params: SolverParams,
    mask: Optional[BinaryMask] = None,
    stages: Sequence[float] = (),
) -> DiffusionState:
    """
    Алгоритм диффузии: каналы считаются независимо и параллельно

    U^(0) = U0, V^(0) = 0, λ^(0) = 0. Канал останавливается, когда R_n ≤ r_stop
    (или ниже наименьшей ступени из `stages`) и наибольшее изменение U на маске
    не больше settle, либо на max_iters. R_n одной экспоненциальной моды
    держится на её скорости затухания и падает ниже порога раньше, чем
    индекс в объекте выровнялся.
    """
    if seed.shape != g.g.shape:
        raise ParameterError(f"Размеры семян {seed.shape} и веса {g.g.shape} не совпадают")
    if g.G0 <= 0:
        raise DegenerateWeightError("Вес тождественно равен нулю (G0 = 0)")

    mask = mask if mask is not None else g.support
    if mask.shape != seed.shape:
        raise ParameterError(f"Размеры маски {mask.shape} и семян {seed.shape} не совпадают")
    eta_d = fidelity_field(seed, mask, params).data
    height, width = seed.shape
    op = build_spectral_operator(width, height, params, g.G0)
    stages = sorted({float(s) for s in stages}, reverse=True)
    stop = min([params.r_stop] + stages)

    semaphore = asyncio.Semaphore(max(1, settings.MAX_WORKERS))

    async def run_one(c: int) -> _ChannelRun:
        async with semaphore:
            return await asyncio.to_thread(
                _run_channel, c, seed.channels.data[c], eta_d, g.g.data, op, params, stop, stages, mask.data
            )

    runs = await asyncio.gather(*(run_one(c) for c in range(seed.channels.channels)))

    state = DiffusionState(
        U=IndexField(data=np.stack([r.u for r in runs])),
        V=IndexField(data=np.stack([r.v for r in runs])),
        lam=IndexField(data=np.stack([r.lam for r in runs])),
        k=max(r.trace.iterations for r in runs),
        traces=[r.trace for r in runs],
        stages={
            stage: IndexField(data=np.stack([r.snapshots.get(stage, r.u) for r in runs]))
            for stage in stages
        },
        params=params,
    )
    iters = ", ".join(str(t.iterations) for t in state.traces)
    logger.info(f"✅ Диффузия завершена: {state.U.channels} канал(ов), итераций [{iters}]")
    return state


def run_diffusion(
    seed: SeedImage,
    g: EdgeWeight,
    params: SolverParams,
    mask: Optional[BinaryMask] = None,
    stages: Sequence[float] = (),
) -> DiffusionState:
    """Синхронная обёртка над run_diffusion_async"""
    return asyncio.run(run_diffusion_async(seed, g, params, mask=mask, stages=stages))


def convergence_report(state: DiffusionState) -> ConvergenceReport:
    """Монотонность остатка Ляпунова и затухание разностей итераций по каналам"""
    reports = []
    for c, trace in enumerate(state.traces):
        if trace.iterations < 2:
            raise InsufficientHistoryError(f"Канал {c}: записано {trace.iterations} итераций, нужно ≥ 2")
        violations = [
            n + 1
            for n in range(1, trace.iterations)
            if trace.lyapunov[n] - trace.lyapunov[n - 1] > 1e-10 * (1.0 + abs(trace.lyapunov[n - 1]))
        ]
        energy_monotone = all(
            trace.energy[n] - trace.energy[n - 1] <= 1e-10 * (1.0 + abs(trace.energy[n - 1]))
            for n in range(1, trace.iterations)
        )
        reports.append(ChannelReport(
            channel=c,
            iterations=trace.iterations,
            lyapunov_monotone=not violations,
            energy_monotone=energy_monotone,
            violations=violations,
            final_du=trace.du[-1],
            final_dv=trace.dv[-1],
            final_dlam=trace.dlam[-1],
            relative_du=trace.du[-1] / trace.u_first_norm if trace.u_first_norm else 0.0,
        ))
        if violations:
            logger.warning(f"⚠️ Канал {c}: остаток растёт на итерациях {violations[:5]}")
    return ConvergenceReport(channels=reports)


def periodic_laplacian_matrix(height: int, width: int) -> np.ndarray:
    """Плотная матрица периодического 5-точечного лапласиана (построчная нумерация)"""
    def second_difference(n: int) -> np.ndarray:
        eye = np.eye(n)
        return np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1) - 2.0 * eye

    return np.kron(np.eye(height), second_difference(width)) + np.kron(second_difference(height), np.eye(width))


def dense_oracle_solve(rhs: IndexField, params: SolverParams, G0: float, dims: Tuple[int, int]) -> IndexField:
    """Прямое решение ((θ+μ)I − 2G0·L)x = rhs; только для сеток ≤ 32×32"""
    height, width = dims
    if height > MAX_ORACLE_SIDE or width > MAX_ORACLE_SIDE:
        raise ParameterError(f"Плотный оракул ограничен {MAX_ORACLE_SIDE}×{MAX_ORACLE_SIDE}: {width}×{height}")
    matrix = (params.theta + params.mu) * np.eye(height * width) - 2.0 * G0 * periodic_laplacian_matrix(height, width)
    try:
        solutions = [linalg.solve(matrix, rhs.data[c].ravel(), assume_a="sym") for c in range(rhs.channels)]
    except linalg.LinAlgError as e:
        raise CodiError(f"Вырожденная матрица оракула: {e}") from e
    return IndexField(data=np.stack([s.reshape(height, width) for s in solutions]))
