"""
共通ユーティリティ（並列グリッド評価とフィット）
"""
import concurrent.futures
import logging
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import PROCESSING_CONFIG
from .exceptions import DegenerateFitError, DomainError

logger = logging.getLogger(__name__)


def resolve_workers(max_workers: Optional[int]) -> int:
    if max_workers is None:
        return PROCESSING_CONFIG["default_workers"]
    if max_workers < 1:
        raise DomainError(f"worker count must be >= 1, got {max_workers}")
    return min(max_workers, PROCESSING_CONFIG["max_workers"])


def map_ordered(func: Callable[[Any], Any], items: Sequence[Any], max_workers: Optional[int] = None,
                progress_callback: Optional[Callable] = None) -> List[Any]:
    """
    items を並列に評価し、入力順で結果を返す

    完了順に回収するが、格納はインデックス順なので結果は並列度に依存しない。
    最初に発生した例外はそのまま送出する。
    """
    workers = resolve_workers(max_workers)
    total = len(items)
    results: List[Any] = [None] * total
    if workers == 1:
        for i, item in enumerate(items):
            results[i] = func(item)
            if progress_callback:
                progress_callback(i + 1, total, str(i))
        return results

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_index = {executor.submit(func, item): i for i, item in enumerate(items)}
        completed = 0
        for future in concurrent.futures.as_completed(future_to_index):
            index = future_to_index[future]
            results[index] = future.result()
            completed += 1
            if progress_callback:
                progress_callback(completed, total, str(index))
    return results


def loglog_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """
    log y = k log x + c の最小二乗フィット

    Returns:
        (指数 k, 対数空間のRMS残差)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise DegenerateFitError("scaling variable does not vary across the grid")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateFitError("log-log fit needs strictly positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return float(slope), residual


def fit_through_origin(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """y = a x のフィット。Returns (a, R²)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    denom = float(np.dot(x, x))
    if denom == 0:
        raise DegenerateFitError("all abscissae are zero")
    slope = float(np.dot(x, y)) / denom
    ss_res = float(np.sum((y - slope * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return slope, r2
