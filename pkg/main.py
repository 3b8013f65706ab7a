import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from config import settings
from handlers.commands import dispatch
from services.fixtures import FIXTURES
from services.pipeline import CONFIG_KEYS
from utils.errors import CodiError, ConfigError, StageError

# Настройка логирования
logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE = 1
EXIT_CONFIG = 2


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    """--config и по флагу --<ключ> на каждый ключ конфигурации (перекрывают файл)"""
    parser.add_argument("--config", help="файл ключ=значение")
    group = parser.add_argument_group("ключи конфигурации")
    for key in CONFIG_KEYS:
        if key == "input":
            continue
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="VALUE")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="codi", description="Подсчёт объектов по диффузному индексу")
    commands = parser.add_subparsers(dest="command", required=True)

    count = commands.add_parser("count", help="посчитать объекты на изображении")
    count.add_argument("image", help="PGM/PPM/PNG")
    _add_config_flags(count)

    fixture = commands.add_parser("gen-fixture", help="синтетическое тестовое изображение")
    fixture.add_argument("name", choices=sorted(FIXTURES))
    fixture.add_argument("out", help="путь к .pgm")

    group = commands.add_parser("group", help="группы размеров по регуляризованному k-means")
    group.add_argument("--sizes", required=True, help="CSV с размерами (колонка size или первая)")
    group.add_argument("--lambda-grid", help="список через запятую или logspace:lo,hi,n")
    group.add_argument("--out", help="каталог для groups.txt и lambda.csv")

    sweep = commands.add_parser("sweep", help="K по сетке параметров счётчика")
    sweep.add_argument("image", help="PGM/PPM/PNG")
    sweep.add_argument("--sigmas", help="σ через запятую (scalar)")
    sweep.add_argument("--eps-values", help="ε через запятую (multi)")
    sweep.add_argument("--minpts-values", help="MinPts через запятую (multi)")
    _add_config_flags(sweep)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Главная функция; возвращает код выхода"""
    args = build_parser().parse_args(argv)
    try:
        asyncio.run(dispatch(args))
    except ConfigError as e:
        logger.error(f"❌ Ошибка конфигурации, ключ '{e.key}': {e.message}")
        return EXIT_CONFIG
    except StageError as e:
        logger.error(f"❌ Ошибка на этапе '{e.stage}': {e.cause}")
        return EXIT_STAGE
    except CodiError as e:
        logger.error(f"❌ {e}")
        return EXIT_STAGE
    except KeyboardInterrupt:
        logger.info("Остановлено")
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
