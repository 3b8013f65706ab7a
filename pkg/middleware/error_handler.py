"""Обработка ошибок этапов пайплайна"""
import inspect
import logging
from typing import Any, Callable

from utils.errors import CodiError, StageError

logger = logging.getLogger(__name__)


class StageErrorHandler:
    """Выполняет этап и превращает любую ошибку в StageError с именем этапа"""

    async def __call__(self, stage: str, func: Callable[..., Any], *args: Any, **kwargs: Any) -> Any:
        try:
            result = func(*args, **kwargs)
            if inspect.isawaitable(result):
                result = await result
            return result
        except StageError:
            raise
        except CodiError as e:
            # Известная ошибка предметной области
            logger.error(f"❌ Этап '{stage}': {e}")
            raise StageError(stage, e) from e
        except Exception as e:
            logger.error(f"❌ Необработанная ошибка на этапе '{stage}': {e}", exc_info=True)
            raise StageError(stage, e) from e
