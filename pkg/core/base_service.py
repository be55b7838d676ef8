import logging
import sys
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, Optional, Sequence

from config.settings import APP_CONFIG

LOG_FORMAT = "[%(name)s] %(levelname)s: %(message)s"


def configure_logging(level: Optional[str] = None, verbose: bool = False):
    """
    ルートロガーに標準エラー出力のハンドラを1つだけ設定

    Args:
        level: ログレベル名（None の場合は APP_CONFIG の値）
        verbose: True なら DEBUG
    """
    name = "DEBUG" if verbose else (level or APP_CONFIG["log_level"])
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_lab_handler", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._lab_handler = True
    root.addHandler(handler)
    root.setLevel(getattr(logging, str(name).upper(), logging.INFO))


class BaseDataValidator:
    """
    入力検証の共通ロジック
    """

    @staticmethod
    def validate_grid(grid: Sequence[Dict[str, Any]], required_keys: Iterable[str]) -> Dict[str, Any]:
        """パラメータグリッドの妥当性を検証"""
        result = {"valid": True, "errors": []}

        if not grid:
            result["valid"] = False
            result["errors"].append("パラメータグリッドが空です")
            return result

        if not isinstance(grid, (list, tuple)):
            result["valid"] = False
            result["errors"].append("グリッドは配列である必要があります")
            return result

        for i, point in enumerate(grid):
            if not isinstance(point, dict):
                result["valid"] = False
                result["errors"].append(f"グリッド点 {i} がオブジェクトではありません")
                continue
            for key in required_keys:
                if key not in point:
                    result["valid"] = False
                    result["errors"].append(f"グリッド点 {i} に {key} が指定されていません")

        return result

    @staticmethod
    def validate_axes(axes: Dict[str, Sequence[float]], allowed: Iterable[str]) -> Dict[str, Any]:
        """スイープ軸の妥当性を検証"""
        result = {"valid": True, "errors": []}
        allowed = set(allowed)

        if not axes:
            result["valid"] = False
            result["errors"].append("スイープ軸が指定されていません")
            return result

        for name, grid in axes.items():
            if name not in allowed:
                result["valid"] = False
                result["errors"].append(f"未知のスイープ軸です: {name}")
            elif not grid:
                result["valid"] = False
                result["errors"].append(f"スイープ軸 {name} が空です")

        return result


class BaseProcessor(ABC):
    """
    処理基盤の共通クラス
    エラーハンドリング、ログ、進捗管理を統一化
    """

    def __init__(self, service_name: str):
        self.service_name = service_name
        self.validator = BaseDataValidator()
        self.logger = logging.getLogger(service_name)

    def log_info(self, message: str):
        self.logger.info(message)

    def log_warning(self, message: str):
        self.logger.warning(message)

    def log_error(self, message: str):
        self.logger.error(message)

    def handle_exception(self, operation: str, exception: Exception) -> Dict[str, Any]:
        """例外を統一的に処理"""
        error_message = f"{operation}中にエラーが発生しました: {str(exception)}"
        self.log_error(error_message)

        return {
            "success": False,
            "error": error_message,
            "operation": operation,
            "exception_type": type(exception).__name__
        }

    def create_progress_callback(self, operation_name: str, total_items: int):
        """進捗コールバック関数を作成"""
        def progress_callback(completed: int, total: int = total_items, current_item: str = ""):
            percentage = (completed / total) * 100 if total > 0 else 0
            item_info = f" ({current_item})" if current_item else ""
            self.logger.debug(f"{operation_name}: {completed}/{total} ({percentage:.1f}%){item_info}")

        return progress_callback

    @abstractmethod
    def process(self, *args, **kwargs) -> Dict[str, Any]:
        """
        実際の処理を実装

        Returns:
            処理結果
        """
        pass
