"""
Иерархия исключений CODI
"""
from typing import Optional


class CodiError(Exception):
    """Базовая ошибка подсчёта объектов"""


class ParameterError(CodiError, ValueError):
    """Параметр вне допустимого диапазона"""


class ImageIOError(CodiError, OSError):
    """Файл изображения не читается или не записывается"""


class ImageFormatError(CodiError):
    """Неподдерживаемый или повреждённый формат изображения"""


class DegenerateWeightError(CodiError):
    """Вес диффузии тождественно равен нулю (G0 = 0)"""


class NumericalDivergenceError(CodiError, ArithmeticError):
    """Итерация выдала NaN/Inf"""


class EmptyDomainError(CodiError):
    """Пустая маска или пустая гистограмма"""


class InsufficientHistoryError(CodiError):
    """Недостаточно записанных итераций для отчёта о сходимости"""


class ConfigError(CodiError, ValueError):
    """Ошибка конфигурации с указанием ключа"""

    def __init__(self, key: str, message: str = ""):
        self.key = key
        self.message = message
        super().__init__(f"{key}: {message}" if message else key)


class StageError(CodiError):
    """Ошибка этапа пайплайна"""

    def __init__(self, stage: str, cause: Optional[BaseException] = None):
        self.stage = stage
        self.cause = cause
        super().__init__(f"Этап '{stage}': {cause}")
