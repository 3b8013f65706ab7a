import numpy as np
from pydantic_settings import BaseSettings
from typing import List


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"

    # Diffusion solver (ADMM)
    DIFFUSION_MU: float = 5e-5  # Штраф μ
    DIFFUSION_THETA: float = 1.0  # Проксимальный вес θ
    DIFFUSION_ETA: float = 1e-4  # Вес верности η
    DIFFUSION_CLAMP_LOW: float = 1.0  # Нижняя граница a (выше фона 0)
    DIFFUSION_CLAMP_HIGH: float = 255.0  # Верхняя граница b
    DIFFUSION_R_STOP: float = 0.05  # Порог остановки по R_n
    DIFFUSION_MAX_ITERS: int = 1000
    DIFFUSION_SETTLE: float = 1e-3  # Останов по R_n только при max|dU| на маске ≤ порога
    DIFFUSION_CHECK_FEASIBILITY: bool = True  # Проверять a ≤ V ≤ b на каждой итерации

    # Seeds
    SEED_SIZE: int = 2  # Сторона квадрата d
    SEED_GAP: int = 6  # Зазор между границами l
    SEED_DIMENSIONS: int = 4  # p для CODI-M

    # Edge weight
    EDGE_TAU: float = 10.0
    EDGE_SIGMA: float = 1.0
    BORDER_WIDTH: int = 1  # Искусственная рамка против периодического склеивания
    WEIGHT_RECIPE: str = "thresh:gt,127"

    # CODI-S
    HIST_SIGMA: float = 0.6
    HIST_RADIUS: int = 5
    HIST_PEAK_PROMINENCE: float = 0.0  # Доля от максимума сглаженной кривой, 0 - все строгие максимумы

    # CODI-M
    DBSCAN_EPS: float = 1.1
    DBSCAN_MIN_PTS: int = 15
    DBSCAN_MAX_POINTS: int = 500000  # Выше этого предупреждаем и советуем downsample

    # Size grouping
    LAMBDA_GRID_MIN: float = 1e2
    LAMBDA_GRID_MAX: float = 1e6
    LAMBDA_GRID_POINTS: int = 60

    # Output & performance
    OUTPUT_DIR: str = "codi_out"
    MAX_WORKERS: int = 4  # Одновременно считаемых каналов/прогонов

    @property
    def lambda_grid(self) -> List[float]:
        return np.logspace(
            np.log10(self.LAMBDA_GRID_MIN),
            np.log10(self.LAMBDA_GRID_MAX),
            self.LAMBDA_GRID_POINTS,
        ).tolist()

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()
