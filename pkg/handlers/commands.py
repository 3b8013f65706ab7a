"""
Обработчики команд CLI: count, gen-fixture, group, sweep
"""
import argparse
import logging
from pathlib import Path
from typing import Dict, List, Optional

from config import settings
from imaging.codec import save_field
from services.fixtures import make_fixture
from services.pipeline import (
    CONFIG_KEYS,
    PipelineConfig,
    RunReport,
    load_config,
    parse_config,
    plateau_groupings,
    run_pipeline_async,
    run_sweep_async,
)
from services.reporting import ArtifactWriter, read_sizes_csv
from services.size_grouping import SizeGrouping, lambda_sweep_async
from utils.errors import ConfigError, StageError

logger = logging.getLogger(__name__)


def collect_overrides(args: argparse.Namespace) -> Dict[str, str]:
    """Флаги --<ключ>, заданные в командной строке"""
    overrides = {}
    for key in CONFIG_KEYS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    return overrides


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Файл конфигурации, затем флаги; позиционный путь к изображению задаёт input"""
    overrides = collect_overrides(args)
    if getattr(args, "image", None):
        overrides["input"] = args.image
    if getattr(args, "config", None):
        return load_config(args.config, overrides)
    return parse_config("", overrides)


async def handle_count(args: argparse.Namespace) -> RunReport:
    """codi count <image> --config <file> [флаги]"""
    cfg = build_config(args)
    report = await run_pipeline_async(cfg)
    print(f"K = {report.count}")
    if len(report.counts) > 1:
        print(f"counts = {report.counts}  min = {report.min_count}  max = {report.max_count}  mode = {report.mode}")
    print(f"Артефакты: {cfg.out}")
    return report


async def handle_gen_fixture(args: argparse.Namespace) -> Path:
    """codi gen-fixture <name> <out.pgm>"""
    field = make_fixture(args.name)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_field(field, path)
    print(f"✅ {args.name}: {field.width}×{field.height} → {path}")
    return path


async def handle_group(args: argparse.Namespace) -> List[SizeGrouping]:
    """codi group --sizes <csv> --lambda-grid ...; пишет groups.txt и lambda.csv"""
    sizes = read_sizes_csv(args.sizes)
    if not sizes:
        raise ConfigError("sizes", f"в {args.sizes} нет размеров")
    grid_text = args.lambda_grid if args.lambda_grid else None
    if grid_text is not None:
        grid = parse_config("", {"lambda_grid": grid_text}).lambda_grid
    else:
        grid = settings.lambda_grid

    try:
        sweep = await lambda_sweep_async(sizes, grid)
    except Exception as e:
        raise StageError("grouping", e) from e

    groupings = plateau_groupings(sizes, sweep)

    writer = ArtifactWriter(args.out or settings.OUTPUT_DIR)
    await writer.write_groups(groupings, sweep)
    for plateau in sweep.plateaus:
        print(f"k = {plateau.k}: λ ∈ [{plateau.lam_low:.4g}, {plateau.lam_high:.4g}], точек сетки {plateau.points}")
    return groupings


async def handle_sweep(args: argparse.Namespace) -> List[Dict[str, float]]:
    """codi sweep <image>: K по σ (scalar) или по сетке (MinPts, ε) (multi)"""
    cfg = build_config(args)
    kwargs = {}
    if args.sigmas:
        kwargs["sigmas"] = _floats(args.sigmas, "sigmas")
    if args.eps_values:
        kwargs["eps_values"] = _floats(args.eps_values, "eps_values")
    if args.minpts_values:
        kwargs["min_pts_values"] = [int(v) for v in _floats(args.minpts_values, "minpts_values")]
    rows = await run_sweep_async(cfg, **kwargs)
    counts = sorted({int(r["count"]) for r in rows})
    print(f"Узлов: {len(rows)}, значения K: {counts}")
    return rows


def _floats(text: str, key: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(key, f"ожидается список чисел через запятую: {e}") from e
    if not values:
        raise ConfigError(key, "пустой список")
    return values


HANDLERS = {
    "count": handle_count,
    "gen-fixture": handle_gen_fixture,
    "group": handle_group,
    "sweep": handle_sweep,
}


async def dispatch(args: argparse.Namespace) -> Optional[object]:
    handler = HANDLERS[args.command]
    logger.debug(f"Команда {args.command}")
    return await handler(args)
