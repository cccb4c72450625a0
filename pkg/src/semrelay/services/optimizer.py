# src/semrelay/services/optimizer.py
"""
圧縮率の組 (v1, v2) のグリッド探索。

[0,1) を K 等分した各区間の中点 (2k−1)/(2K) を両軸に取り、K² 個のセルそれぞれで
trials 回の通信路実現について PSNR を平均する。最大値のセルを返し、同値なら
行優先（v1 が外側）で先に現れたセルを採る。
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from semrelay.errors import GridEvaluationError
from semrelay.models.system import SemanticRelayModel
from semrelay.services.config import SystemConfig
from semrelay.services.pipeline import evaluate_groups
from semrelay.services.results import to_frame
from semrelay.tensor import ImageBatch

logger = logging.getLogger(__name__)

Evaluator = Callable[[float, float, int], float]

GRID_COLUMNS = ["v1", "v2", "mean_psnr", "std_psnr"]


def midpoints(k: int) -> list[float]:
    if k < 1:
        raise ValueError(f"grid count must be >= 1, got {k}")
    return [(2 * i - 1) / (2 * k) for i in range(1, k + 1)]


@dataclass(frozen=True)
class GridResult:
    v1_op: float
    v2_op: float
    best_value: float
    axis: tuple[float, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {"v1": v1, "v2": v2, "mean_psnr": float(self.mean[i, j]), "std_psnr": float(self.std[i, j])}
            for i, v1 in enumerate(self.axis)
            for j, v2 in enumerate(self.axis)
        ]
        return to_frame(rows, GRID_COLUMNS)


def _evaluate_cell(evaluate: Evaluator, v1: float, v2: float, trials: int) -> np.ndarray:
    try:
        return np.array([float(evaluate(v1, v2, t)) for t in range(trials)], dtype=np.float64)
    except GridEvaluationError:
        raise
    except Exception as e:
        raise GridEvaluationError(v1, v2, e) from e


def grid_search(evaluate: Evaluator, k: int = 10, trials: int = 20, workers: int = 1) -> GridResult:
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    axis = midpoints(k)
    cells = [(i, j) for i in range(k) for j in range(k)]

    def run(cell: tuple[int, int]) -> np.ndarray:
        i, j = cell
        return _evaluate_cell(evaluate, axis[i], axis[j], trials)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        samples = list(pool.map(run, cells))

    mean = np.empty((k, k))
    std = np.empty((k, k))
    for (i, j), values in zip(cells, samples):
        mean[i, j] = values.mean()
        std[i, j] = values.std()

    # 全セルが揃ってから行優先で最大を選ぶ
    best_i, best_j = 0, 0
    for i, j in cells:
        if mean[i, j] > mean[best_i, best_j]:
            best_i, best_j = i, j
    result = GridResult(axis[best_i], axis[best_j], float(mean[best_i, best_j]), tuple(axis), mean, std)
    logger.info("grid search: best (v1=%.4f, v2=%.4f) -> %.4f", result.v1_op, result.v2_op, result.best_value)
    return result


def model_evaluator(model: SemanticRelayModel, groups: Sequence[ImageBatch], cfg: SystemConfig) -> Evaluator:
    """平均的なフェージング条件のもとでの宛先 PSNR を返す評価関数。"""

    def evaluate(v1: float, v2: float, trial: int) -> float:
        point = cfg.with_values({"rate.v1": v1, "rate.v2": v2})
        key = (int(round(v1 * 1_000_000)), int(round(v2 * 1_000_000)))
        return evaluate_groups(model, groups, point, *key, trial=trial).psnr

    return evaluate
