"""
Генерация изображения семян U0 и области семян D
"""
import logging
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from config import settings
from imaging.models import BinaryMask, IndexField
from utils.errors import ParameterError

logger = logging.getLogger(__name__)


class SeedSpec(BaseModel):
    """Геометрия сетки семян"""

    model_config = ConfigDict(frozen=True)

    n1: int = Field(ge=1)  # строк семян
    n2: int = Field(ge=1)  # столбцов семян
    d: int = Field(default=settings.SEED_SIZE, ge=1)  # сторона квадрата
    l: int = Field(default=settings.SEED_GAP, ge=0)  # зазор между границами
    p: int = Field(default=1, ge=1)  # число каналов
    rng_seed: int = 0

    @property
    def count(self) -> int:
        return self.n1 * self.n2

    def fits(self, width: int, height: int) -> bool:
        return (
            self.n1 * self.d + (self.n1 - 1) * self.l <= height
            and self.n2 * self.d + (self.n2 - 1) * self.l <= width
        )


class SeedImage(BaseModel):
    """Каналы U0, маска D и базовые значения семян"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: SeedSpec
    channels: IndexField
    seeded: BinaryMask
    seed_values: np.ndarray
    squares: List[Tuple[int, int]]  # левый верхний угол каждого квадрата, построчно

    @property
    def shape(self) -> Tuple[int, int]:
        return self.channels.shape


class SeedRuleViolation(BaseModel):
    component: int
    rule: int
    message: str


class SeedRuleReport(BaseModel):
    """Рекомендательный отчёт о правилах размещения семян"""

    components: int = 0
    violations: List[SeedRuleViolation] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def uncovered(self) -> List[int]:
        return [v.component for v in self.violations if v.rule == 1]


def grid_counts(d: int, l: int, width: int, height: int) -> Tuple[int, int]:
    """Максимальное число семян, помещающихся по высоте и ширине"""
    return max(1, (height + l) // (d + l)), max(1, (width + l) // (d + l))


def seed_squares(spec: SeedSpec, width: int, height: int) -> List[Tuple[int, int]]:
    """Левые верхние углы квадратов; сетка центрирована, остаток делится пополам"""
    if not spec.fits(width, height):
        raise ParameterError(
            f"Семена {spec.n1}×{spec.n2} (d={spec.d}, l={spec.l}) не помещаются в {width}×{height}"
        )
    pitch = spec.d + spec.l
    top = (height - (spec.n1 * spec.d + (spec.n1 - 1) * spec.l)) // 2
    left = (width - (spec.n2 * spec.d + (spec.n2 - 1) * spec.l)) // 2
    return [
        (top + i * pitch, left + j * pitch)
        for i in range(spec.n1)
        for j in range(spec.n2)
    ]


def make_seed_image(spec: SeedSpec, width: int, height: int) -> SeedImage:
    """
    Строит U0: канал 1 - построчная нумерация, канал 2 - снизу вверх,
    каналы 3..p - случайные перестановки значений канала 1 (PCG64 из rng_seed)
    """
    squares = seed_squares(spec, width, height)
    m = spec.count
    step = 255.0 / m

    rows = np.repeat(np.arange(1, spec.n1 + 1), spec.n2)
    cols = np.tile(np.arange(1, spec.n2 + 1), spec.n1)
    base = step * ((rows - 1) * spec.n2 + cols)

    per_channel = [base]
    if spec.p >= 2:
        per_channel.append(step * (spec.n1 * spec.n2 - rows * spec.n2 + cols))
    rng = np.random.default_rng(spec.rng_seed)
    for _ in range(2, spec.p):
        per_channel.append(base[rng.permutation(m)])

    channels = np.zeros((spec.p, height, width))
    seeded = np.zeros((height, width), dtype=bool)
    for index, (top, left) in enumerate(squares):
        window = (slice(top, top + spec.d), slice(left, left + spec.d))
        seeded[window] = True
        for c, values in enumerate(per_channel):
            channels[c][window] = values[index]

    logger.debug(f"Семена: {spec.n1}×{spec.n2}, d={spec.d}, l={spec.l}, p={spec.p}")
    return SeedImage(
        spec=spec,
        channels=IndexField(data=channels),
        seeded=BinaryMask(data=seeded),
        seed_values=base,
        squares=squares,
    )


def check_seed_rules(spec: SeedSpec, mask: BinaryMask) -> SeedRuleReport:
    """
    Проверяет правила размещения семян по 4-связным компонентам маски

    Правило 1: каждая компонента содержит хотя бы один целый квадрат.
    Правило 2: ни один квадрат не задевает две разные компоненты.
    """
    components, count = ndimage.label(mask.data)
    if count == 0:
        return SeedRuleReport()

    covered = set()
    violations: List[SeedRuleViolation] = []
    for top, left in seed_squares(spec, mask.width, mask.height):
        window = components[top:top + spec.d, left:left + spec.d]
        touched = np.unique(window[window > 0])
        if touched.size > 1:
            violations.append(SeedRuleViolation(
                component=int(touched[0]),
                rule=2,
                message=f"квадрат ({top},{left}) задевает компоненты {touched.tolist()}",
            ))
        if touched.size == 1 and np.all(window == touched[0]):
            covered.add(int(touched[0]))

    for component in range(1, count + 1):
        if component not in covered:
            violations.append(SeedRuleViolation(
                component=component,
                rule=1,
                message=f"компонента {component} не содержит целого семени",
            ))
    violations.sort(key=lambda v: (v.component, v.rule))

    report = SeedRuleReport(components=count, violations=violations)
    if not report.ok:
        logger.warning(
            f"⚠️ Нарушения правил семян: {len(violations)} из {count} компонент"
        )
    return report
