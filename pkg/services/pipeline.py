"""
Пайплайн подсчёта: изображение → вес → семена → диффузия → подсчёт → группы размеров
"""
import asyncio
import enum
import logging
import math
import shlex
import time
from collections import Counter
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from config import settings
from imaging.codec import load_image, quantize
from imaging.models import BinaryMask, IndexField, LabelImage, RgbImage, ScalarField
from imaging.transforms import add_border_outline, downsample, normalize_channels, scale_length
from middleware.error_handler import StageErrorHandler
from services.codi_m import count_multi, label_image_multi
from services.codi_s import IndexHistogram, count_scalar
from services.diffusion import DiffusionState, FidelityMode, SolverParams, convergence_report, run_diffusion_async
from services.edge_weight import EdgeWeight
from services.parameter_space import DEFAULT_EPS, DEFAULT_MIN_PTS, DEFAULT_SIGMAS, sweep_multi_async, sweep_scalar
from services.recipe import evaluate_mask, evaluate_weight
from services.reporting import ArtifactWriter
from services.seeding import SeedRuleReport, SeedSpec, check_seed_rules, grid_counts, make_seed_image
from services.size_grouping import LambdaSweep, SizeGrouping, lambda_sweep_async, regularized_kmeans
from utils.errors import ConfigError, DegenerateWeightError, EmptyDomainError, InsufficientHistoryError

logger = logging.getLogger(__name__)


class CounterKind(str, enum.Enum):
    SCALAR = "scalar"
    MULTI = "multi"


def _parse_floats(value: str) -> List[float]:
    return [float(v) for v in value.split(",") if v.strip()]


class PipelineConfig(BaseModel):
    """Параметры одного запуска; ключи совпадают с ключами файла конфигурации"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input: str = ""
    downsample: float = Field(default=1.0, gt=0, le=1)
    recipe: str = settings.WEIGHT_RECIPE
    mask_recipe: str = settings.WEIGHT_RECIPE
    border: int = Field(default=settings.BORDER_WIDTH, ge=0)

    counter: CounterKind = CounterKind.MULTI
    n1: int = Field(default=0, ge=0)  # 0 - заполнить кадр
    n2: int = Field(default=0, ge=0)
    d: int = Field(default=settings.SEED_SIZE, ge=1)
    l: int = Field(default=settings.SEED_GAP, ge=0)
    p: Optional[int] = Field(default=None, validate_default=True)
    rng_seed: int = 0

    mu: float = Field(default=settings.DIFFUSION_MU, gt=0)
    theta: float = Field(default=settings.DIFFUSION_THETA, gt=0)
    eta: float = Field(default=settings.DIFFUSION_ETA, gt=0)
    a: float = Field(default=settings.DIFFUSION_CLAMP_LOW, gt=0)
    b: float = Field(default=settings.DIFFUSION_CLAMP_HIGH, le=255)
    r_stop: float = Field(default=settings.DIFFUSION_R_STOP, gt=0, lt=1)
    max_iters: int = Field(default=settings.DIFFUSION_MAX_ITERS, ge=1)
    settle: float = Field(default=settings.DIFFUSION_SETTLE, ge=0)
    fidelity: FidelityMode = FidelityMode.SEEDS
    stages: List[float] = Field(default_factory=list)

    sigma: float = Field(default=settings.HIST_SIGMA, gt=0)
    r: int = Field(default=settings.HIST_RADIUS, ge=1)
    prominence: float = Field(default=settings.HIST_PEAK_PROMINENCE, ge=0, lt=1)
    eps: float = Field(default=settings.DBSCAN_EPS, gt=0)
    minpts: int = Field(default=settings.DBSCAN_MIN_PTS, ge=1)
    normalize: bool = True

    group: bool = False
    lambda_grid: List[float] = Field(default_factory=lambda: settings.lambda_grid)
    trials: int = Field(default=1, ge=1)
    out: str = settings.OUTPUT_DIR

    @field_validator("p")
    @classmethod
    def _check_dimensions(cls, value: Optional[int], info: ValidationInfo) -> Optional[int]:
        counter = info.data.get("counter")
        if counter is None:
            return value
        if value is None:
            return 1 if counter == CounterKind.SCALAR else settings.SEED_DIMENSIONS
        if counter == CounterKind.SCALAR and value != 1:
            raise ValueError("счётчик scalar требует p = 1")
        if counter == CounterKind.MULTI and value < 3:
            raise ValueError("счётчик multi требует p ≥ 3")
        return value

    @field_validator("b")
    @classmethod
    def _check_clamp(cls, value: float, info: ValidationInfo) -> float:
        a = info.data.get("a")
        if a is not None and not a < value:
            raise ValueError(f"нужно a < b, получено a={a}, b={value}")
        return value

    @field_validator("stages", mode="before")
    @classmethod
    def _parse_stages(cls, value):
        if isinstance(value, str):
            value = _parse_floats(value)
        if any(not 0 < s < 1 for s in value):
            raise ValueError("ступени R_n должны лежать в (0,1)")
        return value

    @field_validator("lambda_grid", mode="before")
    @classmethod
    def _parse_lambda_grid(cls, value):
        if isinstance(value, str):
            text = value.strip()
            if text.startswith("logspace:"):
                parts = _parse_floats(text[len("logspace:"):])
                if len(parts) != 3 or parts[0] <= 0 or parts[1] <= parts[0] or parts[2] < 1:
                    raise ValueError("ожидается logspace:lo,hi,n с 0 < lo < hi, n ≥ 1")
                value = np.logspace(math.log10(parts[0]), math.log10(parts[1]), int(parts[2])).tolist()
            else:
                value = _parse_floats(text)
        if not value:
            raise ValueError("пустая сетка λ")
        if any(b <= a for a, b in zip(value, value[1:])) or value[0] < 0:
            raise ValueError("сетка λ должна строго возрастать и быть ≥ 0")
        return value

    def solver_params(self) -> SolverParams:
        return SolverParams(
            mu=self.mu,
            theta=self.theta,
            eta=self.eta,
            a=self.a,
            b=self.b,
            r_stop=self.r_stop,
            max_iters=self.max_iters,
            settle=self.settle,
            fidelity=self.fidelity,
        )


CONFIG_KEYS = tuple(PipelineConfig.model_fields)


def parse_config(text: str = "", overrides: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    """
    Документ ключ=значение (пробелы и переводы строк разделяют пары, # - комментарий)

    overrides перекрывают значения из документа. Любая ошибка - ConfigError
    с именем ключа.
    """
    values: Dict[str, str] = {}
    try:
        tokens = shlex.split(text or "", comments=True)
    except ValueError as e:
        raise ConfigError("config", f"не удалось разобрать документ: {e}") from e
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep or not key.strip():
            raise ConfigError(token, "ожидается ключ=значение")
        values[key.strip().lower()] = value.strip()
    for key, value in (overrides or {}).items():
        values[key.strip().lower().replace("-", "_")] = value

    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "неизвестный ключ")
    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else "config"
        raise ConfigError(key, error["msg"]) from e


def load_config(path: Union[str, Path], overrides: Optional[Mapping[str, str]] = None) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("config", f"не удалось прочитать {path}: {e}") from e
    return parse_config(text, overrides)


# ---------------------------------------------------------------------------
# Результаты


class CountOutcome(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    count: int
    labels: LabelImage
    sizes: List[int]
    histogram: Optional[IndexHistogram] = None


class TrialResult(BaseModel):
    """Один прогон семена → диффузия → подсчёт"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rng_seed: int
    outcome: CountOutcome
    stage_counts: Dict[float, int] = Field(default_factory=dict)
    state: DiffusionState
    seed_rules: SeedRuleReport
    wall_time: float


class RunReport(BaseModel):
    """Итог запуска; времена выполнения в report.txt не попадают"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: PipelineConfig
    image_size: Tuple[int, int]  # ширина, высота после уменьшения
    counts: List[int]
    count: int
    min_count: int
    max_count: int
    mode: int
    trials: List[TrialResult]
    sweep: Optional[LambdaSweep] = None
    groupings: List[SizeGrouping] = Field(default_factory=list)
    wall_times: List[float] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)

    @property
    def mean_wall_time(self) -> float:
        return float(np.mean(self.wall_times)) if self.wall_times else 0.0

    @property
    def labels(self) -> LabelImage:
        return self.trials[0].outcome.labels

    @property
    def sizes(self) -> List[int]:
        return self.trials[0].outcome.sizes


def count_mode(counts: Sequence[int]) -> int:
    """Самое частое значение; при равенстве частот - меньшее"""
    tally = Counter(counts)
    top = max(tally.values())
    return min(c for c, n in tally.items() if n == top)


# ---------------------------------------------------------------------------
# Этапы


def downsample_rgb(img: RgbImage, factor: float) -> RgbImage:
    if factor == 1.0:
        return img
    channels = [downsample(ScalarField(data=img.channel(c)), factor).data for c in range(3)]
    return RgbImage(data=quantize(np.stack(channels, axis=-1)))


def build_weight_and_mask(img: RgbImage, cfg: PipelineConfig, base_dir: Union[str, Path] = ".") -> Tuple[EdgeWeight, BinaryMask]:
    """Вес g с рамкой и маска объектов M внутри носителя g"""
    img = downsample_rgb(img, cfg.downsample)
    weight = evaluate_weight(img, cfg.recipe, base_dir)
    mask = evaluate_mask(img, cfg.mask_recipe, base_dir)
    if cfg.border:
        weight = EdgeWeight.from_array(add_border_outline(weight.g, cfg.border).data)
    if weight.G0 <= 0:
        raise DegenerateWeightError("После рамки вес тождественно равен нулю")
    mask = BinaryMask(data=mask.data & (weight.g.data > 0))
    if mask.count == 0:
        raise EmptyDomainError("Маска объектов пуста")
    logger.info(f"ℹ️ Кадр {mask.width}×{mask.height}, пикселей маски {mask.count}, G0={weight.G0:.4f}")
    return weight, mask


def seed_geometry(cfg: PipelineConfig) -> Tuple[int, int]:
    """
    d и l заданы для исходного кадра и уменьшаются вместе с ним

    d' = max(1, round(d·f)), l' = round(l·f), но не меньше 1 при l > 0,
    чтобы соседние семена не сливались.
    """
    if cfg.downsample == 1.0:
        return cfg.d, cfg.l
    d = scale_length(cfg.d, cfg.downsample, minimum=1)
    l = scale_length(cfg.l, cfg.downsample, minimum=min(cfg.l, 1))
    return d, l


def seed_spec(cfg: PipelineConfig, width: int, height: int, rng_seed: int) -> SeedSpec:
    d, l = seed_geometry(cfg)
    rows, cols = grid_counts(d, l, width, height)
    if (d, l) != (cfg.d, cfg.l):
        logger.debug(f"Семена при уменьшении {cfg.downsample}: d={cfg.d}→{d}, l={cfg.l}→{l}")
    return SeedSpec(n1=cfg.n1 or rows, n2=cfg.n2 or cols, d=d, l=l, p=cfg.p, rng_seed=rng_seed)


def count_index(cfg: PipelineConfig, U: IndexField, mask: BinaryMask) -> CountOutcome:
    """Нормировка каналов и выбранный счётчик"""
    if cfg.normalize:
        U = normalize_channels(U, mask)
    if cfg.counter == CounterKind.SCALAR:
        result = count_scalar(U.channel(0), mask, cfg.sigma, cfg.r, cfg.prominence)
        return CountOutcome(count=result.count, labels=result.labels, sizes=result.sizes, histogram=result.histogram)
    result = count_multi(U, mask, cfg.eps, cfg.minpts)
    return CountOutcome(count=result.count, labels=label_image_multi(result, U.shape), sizes=result.sizes)


async def _run_trial(
    cfg: PipelineConfig,
    weight: EdgeWeight,
    mask: BinaryMask,
    rng_seed: int,
    handle: StageErrorHandler,
) -> TrialResult:
    started = time.perf_counter()
    spec = await handle("seeds", seed_spec, cfg, mask.width, mask.height, rng_seed)
    seed = await handle("seeds", make_seed_image, spec, mask.width, mask.height)
    rules = await handle("seeds", check_seed_rules, spec, mask)

    state = await handle(
        "diffusion", run_diffusion_async, seed, weight, cfg.solver_params(), mask, cfg.stages
    )
    outcome = await handle("count", asyncio.to_thread, count_index, cfg, state.U, mask)
    stage_counts = {}
    for stage, U in state.stages.items():
        staged = await handle("count", asyncio.to_thread, count_index, cfg, U, mask)
        stage_counts[stage] = staged.count

    wall_time = time.perf_counter() - started
    logger.info(f"✅ Прогон rng_seed={rng_seed}: K={outcome.count}, {wall_time:.2f} с")
    return TrialResult(
        rng_seed=rng_seed,
        outcome=outcome,
        stage_counts=stage_counts,
        state=state,
        seed_rules=rules,
        wall_time=wall_time,
    )


async def _prepare(
    cfg: PipelineConfig,
    handle: StageErrorHandler,
    image: Optional[RgbImage],
    base_dir: Optional[Union[str, Path]],
) -> Tuple[EdgeWeight, BinaryMask]:
    if image is None:
        if not cfg.input:
            raise ConfigError("input", "не задано входное изображение")
        image = await handle("load", load_image, cfg.input)
    if base_dir is None:
        base_dir = Path(cfg.input).parent if cfg.input else Path(".")
    return await handle("weight", build_weight_and_mask, image, cfg, base_dir)


async def _run_trials(
    cfg: PipelineConfig,
    weight: EdgeWeight,
    mask: BinaryMask,
    handle: StageErrorHandler,
) -> List[TrialResult]:
    semaphore = asyncio.Semaphore(max(1, settings.MAX_WORKERS))

    async def one(trial: int) -> TrialResult:
        async with semaphore:
            return await _run_trial(cfg, weight, mask, cfg.rng_seed + trial, handle)

    return list(await asyncio.gather(*(one(t) for t in range(cfg.trials))))


def plateau_groupings(sizes: Sequence[int], sweep: LambdaSweep) -> List[SizeGrouping]:
    """Разбиение в средней точке сетки каждого плато"""
    groupings = []
    for plateau in sweep.plateaus:
        inside = [p.lam for p in sweep.points if plateau.lam_low <= p.lam <= plateau.lam_high]
        groupings.append(regularized_kmeans(sizes, inside[len(inside) // 2]))
    return groupings


def report_values(report: RunReport) -> Dict[str, object]:
    """Содержимое report.txt"""
    first = report.trials[0]
    values: Dict[str, object] = {
        "counter": report.config.counter.value,
        "image": f"{report.image_size[0]}x{report.image_size[1]}",
        "count": report.count,
        "trials": len(report.counts),
        "rng_seeds": [t.rng_seed for t in report.trials],
        "counts": report.counts,
        "min": report.min_count,
        "max": report.max_count,
        "mode": report.mode,
        "iterations": [t.iterations for t in first.state.traces],
        "final_rn": [repr(t.rn[-1]) if t.rn else "nan" for t in first.state.traces],
        "seed_components": first.seed_rules.components,
        "seed_violations": len(first.seed_rules.violations),
        "sizes": first.outcome.sizes,
    }
    try:
        values["lyapunov_monotone"] = str(convergence_report(first.state).ok).lower()
    except InsufficientHistoryError:
        values["lyapunov_monotone"] = "n/a"
    for stage in sorted(first.stage_counts, reverse=True):
        values[f"stage_{stage!r}"] = first.stage_counts[stage]
    if report.sweep is not None:
        values["plateau_k"] = [p.k for p in report.sweep.plateaus]
    return values


async def write_artifacts(report: RunReport, writer: ArtifactWriter) -> List[str]:
    first = report.trials[0]
    jobs = [
        writer.write_report(report_values(report)),
        writer.write_labels(first.outcome.labels),
        writer.write_clusters(first.outcome.labels),
        writer.write_trace(first.state.traces),
    ]
    if first.outcome.histogram is not None:
        jobs.append(writer.write_histogram(first.outcome.histogram))
    if report.sweep is not None:
        jobs.append(writer.write_groups(report.groupings, report.sweep))
    await asyncio.gather(*jobs)
    return [str(p) for p in writer.written]


async def run_pipeline_async(
    cfg: PipelineConfig,
    image: Optional[RgbImage] = None,
    base_dir: Optional[Union[str, Path]] = None,
    write: bool = True,
) -> RunReport:
    """
    Полный запуск: [1] вес и маска, [2] семена и диффузия, [3] подсчёт

    При trials > 1 прогоны с rng_seed, rng_seed+1, ... идут параллельно.
    Ошибка любого этапа поднимается как StageError с именем этапа.
    """
    handle = StageErrorHandler()
    logger.info(f"🚀 Запуск CODI: счётчик {cfg.counter.value}, прогонов {cfg.trials}")
    weight, mask = await _prepare(cfg, handle, image, base_dir)
    trials = await _run_trials(cfg, weight, mask, handle)

    counts = [t.outcome.count for t in trials]
    report = RunReport(
        config=cfg,
        image_size=(mask.width, mask.height),
        counts=counts,
        count=count_mode(counts),
        min_count=min(counts),
        max_count=max(counts),
        mode=count_mode(counts),
        trials=trials,
        wall_times=[t.wall_time for t in trials],
    )

    sizes = trials[0].outcome.sizes
    if cfg.group:
        if sizes:
            sweep = await handle("grouping", lambda_sweep_async, sizes, cfg.lambda_grid)
            groupings = await handle("grouping", plateau_groupings, sizes, sweep)
            report = report.model_copy(update={"sweep": sweep, "groupings": groupings})
        else:
            logger.warning("⚠️ Объекты не найдены, группировка размеров пропущена")

    if write:
        artifacts = await handle("artifacts", write_artifacts, report, ArtifactWriter(cfg.out))
        report = report.model_copy(update={"artifacts": artifacts})

    logger.info(
        f"✅ Готово: K={report.count} (min {report.min_count}, max {report.max_count}), "
        f"среднее время прогона {report.mean_wall_time:.2f} с"
    )
    return report


def run_pipeline(
    cfg: PipelineConfig,
    image: Optional[RgbImage] = None,
    base_dir: Optional[Union[str, Path]] = None,
    write: bool = True,
) -> RunReport:
    return asyncio.run(run_pipeline_async(cfg, image, base_dir, write))


async def run_sweep_async(
    cfg: PipelineConfig,
    image: Optional[RgbImage] = None,
    sigmas: Sequence[float] = DEFAULT_SIGMAS,
    eps_values: Sequence[float] = DEFAULT_EPS,
    min_pts_values: Sequence[int] = DEFAULT_MIN_PTS,
    base_dir: Optional[Union[str, Path]] = None,
    write: bool = True,
) -> List[Dict[str, float]]:
    """Одна диффузия и перебор параметров выбранного счётчика (sweep.csv)"""
    handle = StageErrorHandler()
    weight, mask = await _prepare(cfg, handle, image, base_dir)
    spec = await handle("seeds", seed_spec, cfg, mask.width, mask.height, cfg.rng_seed)
    seed = await handle("seeds", make_seed_image, spec, mask.width, mask.height)
    state = await handle("diffusion", run_diffusion_async, seed, weight, cfg.solver_params(), mask)

    U = normalize_channels(state.U, mask) if cfg.normalize else state.U
    if cfg.counter == CounterKind.SCALAR:
        rows = await handle("count", asyncio.to_thread, sweep_scalar, U.channel(0), mask, sigmas, cfg.r, cfg.prominence)
    else:
        rows = await handle("count", sweep_multi_async, U, mask, eps_values, min_pts_values)

    if write:
        await handle("artifacts", ArtifactWriter(cfg.out).write_sweep, rows)
    return rows


def run_sweep(cfg: PipelineConfig, image: Optional[RgbImage] = None, **kwargs) -> List[Dict[str, float]]:
    return asyncio.run(run_sweep_async(cfg, image, **kwargs))
