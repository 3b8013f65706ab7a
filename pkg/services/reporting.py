"""
Артефакты запуска: запись и обратное чтение

    report.txt      ключ = значение, без времён выполнения
    labels.ppm      цветная карта меток
    histogram.csv   level,count,smoothed
    clusters.csv    x,y,label
    trace.csv       channel,iteration,energy,rn,du,dv,dlam,lyapunov
    groups.txt      таблицы групп размеров по плато λ
    lambda.csv      lambda,k,energy
    sweep.csv       параметры счётчика и count
"""
import asyncio
import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from imaging.codec import save_field
from imaging.models import LabelImage
from services.codi_s import IndexHistogram
from services.diffusion import ChannelTrace
from services.size_grouping import LambdaSweep, SizeGrouping
from utils.errors import ImageIOError, ParameterError

logger = logging.getLogger(__name__)

REPORT_FILE = "report.txt"
LABELS_FILE = "labels.ppm"
HISTOGRAM_FILE = "histogram.csv"
CLUSTERS_FILE = "clusters.csv"
TRACE_FILE = "trace.csv"
GROUPS_FILE = "groups.txt"
LAMBDA_FILE = "lambda.csv"
SWEEP_FILE = "sweep.csv"

TRACE_COLUMNS = ["k", "channel", "E_n", "R_n", "dU", "dV", "dLambda", "lyapunov", "dU_max"]
# колонка trace.csv → поле ChannelTrace
TRACE_FIELDS = {"R_n": "rn", "dU": "du", "dV": "dv", "dLambda": "dlam", "lyapunov": "lyapunov", "dU_max": "du_max"}


class GroupRow(BaseModel):
    index: int
    centroid: float
    count: int
    low: float
    high: float


class GroupTable(BaseModel):
    """Одна таблица из groups.txt"""

    lam: float
    k: int
    energy: float
    rows: List[GroupRow] = Field(default_factory=list)


def _num(value: float) -> str:
    """Запись числа без потери точности"""
    return repr(float(value))


# ---------------------------------------------------------------------------
# Форматирование


def format_report(values: Dict[str, object]) -> str:
    lines = ["# CODI report"]
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def format_histogram(h: IndexHistogram) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["level", "count", "smoothed"])
    smoothed = h.smoothed if h.smoothed is not None else np.zeros(len(h.bins))
    for level, (count, value) in enumerate(zip(h.bins.tolist(), smoothed.tolist())):
        writer.writerow([level, count, _num(value)])
    return buffer.getvalue()


def format_clusters(labels: LabelImage) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["x", "y", "label"])
    rows, cols = np.nonzero(labels.data >= 0)
    for y, x in zip(rows.tolist(), cols.tolist()):
        writer.writerow([x, y, int(labels.data[y, x])])
    return buffer.getvalue()


def format_trace(traces: Sequence[ChannelTrace]) -> str:
    """Строка k=0 хранит E_0, остальные колонки в ней пустые; E_n - цель U-подзадачи без проксимального члена"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for channel, trace in enumerate(traces):
        writer.writerow([0, channel, _num(trace.energy_initial)] + [""] * len(TRACE_FIELDS))
        for n in range(trace.iterations):
            row = [n + 1, channel, _num(trace.energy[n])]
            for field in TRACE_FIELDS.values():
                values = getattr(trace, field)
                row.append(_num(values[n]) if n < len(values) else "")
            writer.writerow(row)
    return buffer.getvalue()


def format_groups(groupings: Iterable[SizeGrouping]) -> str:
    """Таблицы вида: I_i, c_i, n_i и диапазон размеров группы"""
    blocks = []
    for grouping in groupings:
        lines = [
            f"lambda = {_num(grouping.lam)}  k = {grouping.k}  energy = {_num(grouping.energy)}",
            "group  centroid  count  low  high",
        ]
        for index, group in enumerate(grouping.groups, start=1):
            lines.append(
                f"{index}  {_num(group.centroid)}  {group.count}  {_num(group.low)}  {_num(group.high)}"
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def format_lambda_curve(sweep: LambdaSweep) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["lambda", "k", "energy"])
    for point in sweep.points:
        writer.writerow([_num(point.lam), point.k, _num(point.energy)])
    return buffer.getvalue()


def format_sweep(rows: Sequence[Dict[str, float]]) -> str:
    if not rows:
        raise ParameterError("Пустой результат перебора параметров")
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Запись


class ArtifactWriter:
    """Пишет артефакты в каталог; записи в один файл идут по очереди"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self._locks: Dict[str, asyncio.Lock] = {}
        self.written: List[Path] = []

    def _lock(self, name: str) -> asyncio.Lock:
        if name not in self._locks:
            self._locks[name] = asyncio.Lock()
        return self._locks[name]

    def _prepare(self) -> None:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ImageIOError(f"Не удалось создать каталог {self.out_dir}: {e}") from e

    async def write_text(self, name: str, text: str) -> Path:
        path = self.out_dir / name
        async with self._lock(name):
            self._prepare()
            try:
                await asyncio.to_thread(path.write_text, text, encoding="utf-8")
            except OSError as e:
                raise ImageIOError(f"Не удалось записать {path}: {e}") from e
        self.written.append(path)
        logger.debug(f"Записан {path}")
        return path

    async def write_labels(self, labels: LabelImage, name: str = LABELS_FILE) -> Path:
        path = self.out_dir / name
        async with self._lock(name):
            self._prepare()
            await asyncio.to_thread(save_field, labels, path)
        self.written.append(path)
        return path

    async def write_report(self, values: Dict[str, object]) -> Path:
        return await self.write_text(REPORT_FILE, format_report(values))

    async def write_histogram(self, h: IndexHistogram) -> Path:
        return await self.write_text(HISTOGRAM_FILE, format_histogram(h))

    async def write_clusters(self, labels: LabelImage) -> Path:
        return await self.write_text(CLUSTERS_FILE, format_clusters(labels))

    async def write_trace(self, traces: Sequence[ChannelTrace]) -> Path:
        return await self.write_text(TRACE_FILE, format_trace(traces))

    async def write_groups(self, groupings: Iterable[SizeGrouping], sweep: Optional[LambdaSweep] = None) -> List[Path]:
        paths = [await self.write_text(GROUPS_FILE, format_groups(groupings))]
        if sweep is not None:
            paths.append(await self.write_text(LAMBDA_FILE, format_lambda_curve(sweep)))
        return paths

    async def write_sweep(self, rows: Sequence[Dict[str, float]]) -> Path:
        return await self.write_text(SWEEP_FILE, format_sweep(rows))


# ---------------------------------------------------------------------------
# Чтение


def _read(path: Union[str, Path]) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ImageIOError(f"Не удалось прочитать {path}: {e}") from e


def read_report(path: Union[str, Path]) -> Dict[str, str]:
    values = {}
    for line in _read(path).splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParameterError(f"Строка отчёта без '=': {line}")
        values[key.strip()] = value.strip()
    return values


def read_histogram_csv(path: Union[str, Path]) -> IndexHistogram:
    rows = list(csv.DictReader(io.StringIO(_read(path))))
    bins = np.array([int(r["count"]) for r in rows], dtype=np.int64)
    smoothed = np.array([float(r["smoothed"]) for r in rows])
    return IndexHistogram(bins=bins, total=int(bins.sum()), smoothed=smoothed)


def read_clusters_csv(path: Union[str, Path]) -> np.ndarray:
    """Массив (n, 3) строк x, y, label"""
    rows = list(csv.DictReader(io.StringIO(_read(path))))
    return np.array([[int(r["x"]), int(r["y"]), int(r["label"])] for r in rows], dtype=np.int64).reshape(-1, 3)


def read_trace_csv(path: Union[str, Path]) -> List[ChannelTrace]:
    traces: Dict[int, ChannelTrace] = {}
    for row in csv.DictReader(io.StringIO(_read(path))):
        channel, k = int(row["channel"]), int(row["k"])
        trace = traces.setdefault(channel, ChannelTrace())
        if k == 0:
            trace.energy_initial = float(row["E_n"])
            continue
        trace.energy.append(float(row["E_n"]))
        for column, field in TRACE_FIELDS.items():
            if row.get(column):
                getattr(trace, field).append(float(row[column]))
    return [traces[c] for c in sorted(traces)]


def read_groups(path: Union[str, Path]) -> List[GroupTable]:
    tables: List[GroupTable] = []
    for block in _read(path).strip().split("\n\n"):
        lines = [line for line in block.splitlines() if line.strip()]
        if not lines:
            continue
        head = dict(
            part.split(" = ") for part in lines[0].split("  ") if " = " in part
        )
        table = GroupTable(lam=float(head["lambda"]), k=int(head["k"]), energy=float(head["energy"]))
        for line in lines[2:]:
            index, centroid, count, low, high = line.split()
            table.rows.append(GroupRow(
                index=int(index), centroid=float(centroid), count=int(count), low=float(low), high=float(high)
            ))
        tables.append(table)
    return tables


def read_lambda_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    return [
        {"lambda": float(r["lambda"]), "k": int(r["k"]), "energy": float(r["energy"])}
        for r in csv.DictReader(io.StringIO(_read(path)))
    ]


def read_sweep_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    return [
        {key: float(value) for key, value in row.items()}
        for row in csv.DictReader(io.StringIO(_read(path)))
    ]


def read_sizes_csv(path: Union[str, Path]) -> List[float]:
    """Размеры из колонки size, иначе из первой колонки; строка-заголовок пропускается"""
    rows = list(csv.reader(io.StringIO(_read(path))))
    if not rows:
        return []
    column = 0
    header = [cell.strip().lower() for cell in rows[0]]
    try:
        float(rows[0][0])
        body = rows
    except (ValueError, IndexError):
        column = header.index("size") if "size" in header else 0
        body = rows[1:]
    try:
        return [float(row[column]) for row in body if row]
    except (ValueError, IndexError) as e:
        raise ParameterError(f"Некорректный CSV размеров {path}: {e}") from e
