"""
入出力用のPydanticモデル定義
"""
import math
from typing import Any, Dict, List, Literal, Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config.settings import APP_CONFIG, NUMERICS_CONFIG


def _check_finite(values, name: str):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} に有限でない値が含まれています: {v}")


def _check_matrix(matrix: Optional[List[List[float]]], rows: int, cols: int, name: str, symmetric: bool = False):
    if matrix is None:
        return
    if len(matrix) != rows or any(len(r) != cols for r in matrix):
        raise ValueError(f"{name} の形状は {rows}x{cols} である必要があります")
    for r in matrix:
        _check_finite(r, name)
    if symmetric:
        for i in range(rows):
            for j in range(i + 1, cols):
                if matrix[i][j] != matrix[j][i]:
                    raise ValueError(f"{name} は対称行列である必要があります（[{i}][{j}]）")


class SpinGroup(BaseModel):
    """スピン（クロモフォア）グループ"""
    model_config = ConfigDict(frozen=True)

    sites: int = Field(description="サイト数 N / M", ge=0)
    frequency: float = Field(default=1.0, description="サイト周波数 ω_A / ω_B（rad/時間）")


class FieldMode(BaseModel):
    """Dicke模型の単一場モード"""
    model_config = ConfigDict(frozen=True)

    frequency: float = Field(default=1.0, description="モード周波数 ω")
    cutoff: int = Field(default=NUMERICS_CONFIG["default_boson_cutoff"], description="Fockカットオフ d", ge=2)


class BathSpec(BaseModel):
    """グループごとのボゾン環境（モード周波数とサイト-モード結合 Γ_{jℓ}）"""
    model_config = ConfigDict(frozen=True)

    frequencies: List[float] = Field(description="モード周波数 ω_{Aℓ}")
    couplings: List[List[float]] = Field(description="結合行列 Γ_{jℓ}（サイト × モード）")
    cutoff: int = Field(default=NUMERICS_CONFIG["default_boson_cutoff"], description="モードごとのカットオフ d", ge=2)

    @property
    def mode_count(self) -> int:
        return len(self.frequencies)

    @field_validator("frequencies")
    @classmethod
    def frequencies_finite(cls, v):
        _check_finite(v, "frequencies")
        return v


class SystemSpec(BaseModel):
    """モデルインスタンスの宣言的記述（ħ = 1、周波数は角周波数）"""
    model_config = ConfigDict(frozen=True)

    schema_version: str = Field(default=APP_CONFIG["schema_version"], description="スキーマバージョン")
    group_a: SpinGroup = Field(description="グループA")
    group_b: Optional[SpinGroup] = Field(default=None, description="グループB")
    field_mode: Optional[FieldMode] = Field(default=None, description="Dicke場モード")
    inter_coupling: float = Field(default=0.0, description="γ: 場結合（Dicke）／グループ間結合（2リング）")
    intra_couplings_a: Optional[List[List[float]]] = Field(default=None, description="γ_{jj'}")
    intra_couplings_b: Optional[List[List[float]]] = Field(default=None, description="γ_{kk'}")
    bath_a: Optional[BathSpec] = Field(default=None, description="グループAの環境")
    bath_b: Optional[BathSpec] = Field(default=None, description="グループBの環境")
    site_disorder_a: Optional[List[float]] = Field(default=None, description="サイト周波数オフセット δ_j")
    site_disorder_b: Optional[List[float]] = Field(default=None, description="サイト周波数オフセット δ_k")
    inter_coupling_disorder: Optional[List[List[float]]] = Field(default=None, description="γ_{jk} のオフセット")
    rwa: bool = Field(default=False, description="回転波近似")
    bath_coupling_form: Literal["excitation_conserving", "sigma_x"] = Field(default="excitation_conserving")
    bath_basis: Literal["collective", "local"] = Field(default="collective")
    rng_seed: int = Field(default=0, description="乱れ生成用シード", ge=0)

    @field_validator("inter_coupling")
    @classmethod
    def coupling_finite(cls, v):
        _check_finite([v], "inter_coupling")
        return v

    @model_validator(mode="after")
    def shapes_consistent(self):
        n = self.group_a.sites
        m = self.group_b.sites if self.group_b else 0
        _check_finite([self.group_a.frequency], "group_a.frequency")
        if self.group_b is not None:
            _check_finite([self.group_b.frequency], "group_b.frequency")
        _check_matrix(self.intra_couplings_a, n, n, "intra_couplings_a", symmetric=True)
        if self.intra_couplings_b is not None and self.group_b is None:
            raise ValueError("intra_couplings_b にはグループBが必要です")
        _check_matrix(self.intra_couplings_b, m, m, "intra_couplings_b", symmetric=True)
        if self.bath_a is not None:
            _check_matrix(self.bath_a.couplings, n, self.bath_a.mode_count, "bath_a.couplings")
        if self.bath_b is not None:
            if self.group_b is None:
                raise ValueError("bath_b にはグループBが必要です")
            _check_matrix(self.bath_b.couplings, m, self.bath_b.mode_count, "bath_b.couplings")
        if self.site_disorder_a is not None:
            if len(self.site_disorder_a) != n:
                raise ValueError("site_disorder_a の長さがサイト数と一致しません")
            _check_finite(self.site_disorder_a, "site_disorder_a")
        if self.site_disorder_b is not None:
            if len(self.site_disorder_b) != m:
                raise ValueError("site_disorder_b の長さがサイト数と一致しません")
            _check_finite(self.site_disorder_b, "site_disorder_b")
        _check_matrix(self.inter_coupling_disorder, n, m, "inter_coupling_disorder")
        return self


class DephasingModel(BaseModel):
    """純位相緩和モデル"""
    model_config = ConfigDict(frozen=True)

    kind: Literal["independent", "collective"] = Field(description="independent: σ_z^j ごと / collective: Σσ_z^j")
    rate: float = Field(description="γ_φ（1/時間）", ge=0)


class DiffusionConfig(BaseModel):
    """LH2アレイの粗視化ランダムウォーク設定（時間は ps、長さは nm）"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=5.0, description="協同増強因子 α", gt=0)
    gamma: float = Field(default=0.2, description="非コヒーレントホッピング率 γ（1/ps）", gt=0)
    tau: float = Field(default=20.0, description="ホッピングのデコヒーレンス時間 τ（ps）", gt=0)
    lifetime_T: float = Field(default=1000.0, description="励起子寿命 T（ps）", gt=0)
    lattice_dim: Literal[1, 2] = Field(default=2, description="格子次元")
    complex_diameter: float = Field(default=7.0, description="錯体の直径（nm）", gt=0)
    target_L: float = Field(default=300.0, description="必要拡散距離（単位数）", gt=0)
    walkers: int = Field(default=10_000, description="ウォーカー数", ge=1)
    rng_seed: int = Field(default=0, description="乱数シード", ge=0)
    lifetime_model: Literal["exponential", "fixed"] = Field(default="exponential", description="寿命分布")


class DiffusionResult(BaseModel):
    """ランダムウォークの集計結果"""
    step_length_ell: float = Field(description="ℓ = αγτ")
    required_step_length: float = Field(description="L/√(γT)")
    rms_displacement_units: float = Field(description="RMS変位（単位数）")
    rms_standard_error: Optional[float] = Field(default=None, description="RMS変位の標準誤差")
    rms_displacement_nm: float = Field(description="RMS変位（nm）")
    incoherent_hops_mean: float = Field(description="非コヒーレントホップ数の平均")
    incoherent_hops_se: Optional[float] = Field(default=None, description="ホップ数平均の標準誤差")
    condition_met: bool = Field(description="コヒーレントステップ条件 ℓ > L/√(γT)")
    walkers_reaching_target: float = Field(description="目標距離に到達した割合", ge=0, le=1)
    walkers: int = Field(description="ウォーカー数", ge=1)

    @model_validator(mode="after")
    def standard_error_present(self):
        if self.walkers > 1 and self.rms_standard_error is None:
            raise ValueError("walkers > 1 の場合は標準誤差が必要です")
        return self


class ScalingSample(BaseModel):
    """スケーリング検証の1グリッド点"""
    params: Dict[str, float] = Field(description="パラメータ")
    predicted: float = Field(description="閉形式の予測値")
    measured: float = Field(description="厳密計算による測定値")
    abs_error: float = Field(description="|predicted − measured|", ge=0)


class RateScalingReport(BaseModel):
    """スケーリング検証レポート"""
    formula: str = Field(description="検証対象（decay, net_transfer, hopping_element など）")
    scaling_variable: str = Field(description="両対数フィットの横軸")
    samples: List[ScalingSample] = Field(description="グリッド点ごとの結果")
    fitted_exponent: Optional[float] = Field(default=None, description="両対数フィットの指数")
    fit_residual: Optional[float] = Field(default=None, description="フィット残差（RMS, 対数空間）")
    expected_exponent: Optional[float] = Field(default=None, description="理論上の指数")
    max_abs_error: float = Field(default=0.0, description="最大絶対誤差", ge=0)
    notes: Optional[str] = Field(default=None, description="備考")

    @model_validator(mode="after")
    def exponent_needs_samples(self):
        if self.fitted_exponent is not None:
            if len(self.samples) < 4:
                raise ValueError("指数フィットには4点以上が必要です")
            if self.fit_residual is None:
                raise ValueError("指数にはフィット残差を併記する必要があります")
        return self

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for s in self.samples:
            row = dict(s.params)
            row.update({"predicted": s.predicted, "measured": s.measured, "abs_err": s.abs_error})
            rows.append(row)
        return pd.DataFrame(rows)


class SectorSummary(BaseModel):
    """セクター分解のサマリー（JSON出力用）"""
    dimension: int = Field(ge=1)
    cooperative_rank: int = Field(ge=0)
    expected_rank: Optional[int] = Field(default=None)
    reconstruction_error: float = Field(ge=0)
    leakage_frobenius: float = Field(ge=0)
    leakage_spectral: float = Field(ge=0)
    leakage_ratio: float = Field(ge=0, description="‖H_CN‖_F / ‖H_C‖_F")
    disorder_width: float = Field(default=0.0, ge=0)


class OutputFile(BaseModel):
    path: str
    sha256: str
    hashed: bool = Field(default=True, description="再現ハッシュ保証の対象か（プロットは対象外）")


class RunManifest(BaseModel):
    """実行マニフェスト（1実行につき1つ）"""
    command: str
    artifact_version: str = Field(default=APP_CONFIG["artifact_version"])
    resolved_config: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    unit_conversions: List[Dict[str, Any]] = Field(default_factory=list)
    started_at: str
    wall_clock_seconds: float = Field(ge=0)
    stage_timings: Dict[str, float] = Field(default_factory=dict)
    outputs: List[OutputFile] = Field(default_factory=list)
    exit_code: int = 0
