"""
Мини-язык рецептов веса

Рецепт - части, разделённые '|'; часть - шаги через ';', слева направо.
Каждая часть начинается с яркости входного изображения и должна закончиться
весом или маской; части перемножаются (compose_weight).

    smooth:σ         сглаживание текущего поля
    edge:kind,τ[,σ]  функция края g̃/ḡ
    thresh:op,t      порог lt/gt → маска
    morph:op,r       дилатация/эрозия маски диском
    chansub:a,b      разность каналов (r,g,b или 0..2)
    equalize         выравнивание гистограммы
    maskfile:path    маска из файла (>127)
"""
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from pydantic import BaseModel

from config import settings
from imaging.codec import load_image
from imaging.models import BinaryMask, RgbImage, ScalarField
from imaging.transforms import equalize_histogram, to_grayscale
from services.edge_weight import (
    EdgeWeight,
    channel_subtract,
    compose_weight,
    edge_function,
    gaussian_smooth,
    morphology,
    threshold_mask,
)
from utils.errors import ParameterError

logger = logging.getLogger(__name__)

CHANNEL_NAMES = {"r": 0, "g": 1, "b": 2, "0": 0, "1": 1, "2": 2}

Value = Union[ScalarField, EdgeWeight, BinaryMask]


class RecipeStep(BaseModel):
    name: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.name}:{','.join(self.args)}" if self.args else self.name


def parse_recipe(text: str) -> List[List[RecipeStep]]:
    """Разбирает рецепт на части и шаги без вычисления"""
    parts = []
    for raw_part in text.split("|"):
        steps = []
        for raw_step in raw_part.split(";"):
            raw_step = raw_step.strip()
            if not raw_step:
                continue
            name, _, rest = raw_step.partition(":")
            args = tuple(a.strip() for a in rest.split(",")) if rest else ()
            steps.append(RecipeStep(name=name.strip().lower(), args=args))
        if not steps:
            raise ParameterError(f"Пустая часть рецепта: '{text}'")
        parts.append(steps)
    return parts


def _as_field(value: Value) -> ScalarField:
    if isinstance(value, EdgeWeight):
        return value.g
    if isinstance(value, BinaryMask):
        return ScalarField(data=value.data.astype(np.float64))
    return value


def _as_mask(value: Value, step: RecipeStep) -> BinaryMask:
    if not isinstance(value, BinaryMask):
        raise ParameterError(f"Шаг '{step}' ожидает маску")
    return value


def _float(step: RecipeStep, index: int, default: float = None) -> float:
    try:
        return float(step.args[index])
    except IndexError:
        if default is None:
            raise ParameterError(f"Шагу '{step}' не хватает аргументов") from None
        return default
    except ValueError:
        raise ParameterError(f"Шаг '{step}': ожидалось число, получено '{step.args[index]}'") from None


def _apply(step: RecipeStep, value: Value, img: RgbImage, base_dir: Path) -> Value:
    if step.name == "smooth":
        return gaussian_smooth(_as_field(value), _float(step, 0))
    if step.name == "edge":
        kind = step.args[0] if step.args else "rational"
        tau = _float(step, 1, settings.EDGE_TAU)
        sigma = _float(step, 2, settings.EDGE_SIGMA)
        return edge_function(_as_field(value), kind, tau=tau, sigma=sigma)
    if step.name == "thresh":
        if not step.args:
            raise ParameterError(f"Шагу '{step}' не хватает аргументов")
        return threshold_mask(_as_field(value), step.args[0], _float(step, 1))
    if step.name == "morph":
        if not step.args:
            raise ParameterError(f"Шагу '{step}' не хватает аргументов")
        return morphology(_as_mask(value, step), step.args[0], int(_float(step, 1, 1)))
    if step.name == "chansub":
        try:
            a, b = (CHANNEL_NAMES[arg.lower()] for arg in step.args[:2])
        except (KeyError, ValueError):
            raise ParameterError(f"Шаг '{step}': каналы задаются как r,g,b или 0..2") from None
        return channel_subtract(img, a, b)
    if step.name == "equalize":
        return equalize_histogram(_as_field(value))
    if step.name == "maskfile":
        if not step.args:
            raise ParameterError(f"Шагу '{step}' не хватает пути")
        path = Path(step.args[0])
        mask_img = load_image(path if path.is_absolute() else base_dir / path)
        if mask_img.shape != img.shape:
            raise ParameterError(f"Размер маски {path} не совпадает с изображением")
        return BinaryMask(data=to_grayscale(mask_img).data > 127)
    raise ParameterError(f"Неизвестный шаг рецепта '{step.name}'")


def evaluate_parts(img: RgbImage, text: str, base_dir: Union[str, Path] = ".") -> List[Union[EdgeWeight, BinaryMask]]:
    """Вычисляет каждую часть рецепта"""
    gray = to_grayscale(img)
    results = []
    for steps in parse_recipe(text):
        value: Value = gray
        for step in steps:
            try:
                value = _apply(step, value, img, Path(base_dir))
            except ParameterError:
                raise
            except ValueError as e:
                raise ParameterError(f"Шаг '{step}': {e}") from e
        if isinstance(value, ScalarField):
            raise ParameterError(
                f"Часть рецепта '{';'.join(map(str, steps))}' должна заканчиваться весом или маской"
            )
        results.append(value)
    return results


def evaluate_weight(img: RgbImage, text: str, base_dir: Union[str, Path] = ".") -> EdgeWeight:
    """Вес диффузии g по рецепту"""
    weight = compose_weight(evaluate_parts(img, text, base_dir))
    logger.info(f"✅ Вес '{text}': G0={weight.G0:.4f}")
    return weight


def evaluate_mask(img: RgbImage, text: str, base_dir: Union[str, Path] = ".") -> BinaryMask:
    """Маска объектов M: носитель произведения частей"""
    product = compose_weight(evaluate_parts(img, text, base_dir))
    return product.support
