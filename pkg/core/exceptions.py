"""
ラボ共通の例外定義
数値モジュールはこれらを送出し、サービス層（BaseProcessor）が結果辞書に変換する
"""
from typing import Any, List, Optional


class LabError(Exception):
    """全例外の基底クラス"""


class DomainError(LabError, ValueError):
    """引数が定義域外（励起数・サイト番号など）"""


class ConfigurationError(LabError, ValueError):
    """設定・仕様の不整合（モード不足、形状不一致など）"""


class CapacityError(LabError):
    """ヒルベルト空間の次元が予算を超過"""

    def __init__(self, dimension: int, limit: int, what: str = "Hilbert space"):
        self.dimension = dimension
        self.limit = limit
        super().__init__(f"{what} dimension {dimension} exceeds budget {limit}")


class ConvergenceError(LabError):
    """反復計算が許容誤差に到達しなかった"""

    def __init__(self, message: str, achieved_residual: float):
        self.achieved_residual = achieved_residual
        super().__init__(f"{message} (achieved residual {achieved_residual:.3e})")


class RegimeViolationError(LabError):
    """短時間（摂動）領域の前提が破れている"""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (residual {residual:.3e})")


class SpanLeakageError(LabError):
    """2準位還元の部分空間から漏れている"""

    def __init__(self, leakage: float, limit: float):
        self.leakage = leakage
        super().__init__(f"population leaves the two-level span: {leakage:.3e} > {limit:.1e}")


class TruncationError(LabError):
    """ボゾンカットオフ最上位準位の占有が大きすぎる"""

    def __init__(self, leak: float, limit: float):
        self.leak = leak
        super().__init__(f"top Fock level population {leak:.3e} exceeds {limit:.1e}")


class DegenerateFitError(LabError):
    """フィットに必要な変化がグリッドに無い"""


class ToleranceFailure(LabError):
    """検証チェックが許容誤差を満たさなかった"""

    def __init__(self, message: str, rows: Optional[List[Any]] = None):
        self.rows = rows or []
        super().__init__(message)
