"""
協同セクター／通常セクターへの分解と、協同増強レートの閉形式

P_C = P_sym(A) ⊗ P_sym(B) ⊗ P_bath(対称集団モードのみ占有)
H = H_C + H_N + H_CN,  H_C = P H P,  H_N = Q H Q,  H_CN = P H Q + Q H P  (Q = 1 − P)
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sparse
import scipy.sparse.linalg as sparse_linalg
from scipy.linalg import null_space

from config.settings import NUMERICS_CONFIG
from .base_service import BaseDataValidator
from .exceptions import ConvergenceError, DegenerateFitError, DomainError
from .hamiltonians import apply_site_disorder, hopping_hamiltonian, model_hamiltonian
from .hilbert import (OperatorMatrix, SpaceLayout, StateVector, build_layout, dicke_product_state, dicke_state,
                      excitation_counts, identity, mode_quanta, symmetric_bath_projector, symmetric_projector,
                      with_mode_excitation)
from .models import FieldMode, RateScalingReport, ScalingSample, SectorSummary, SpinGroup, SystemSpec
from .utils import fit_through_origin, loglog_fit, map_ordered

logger = logging.getLogger(__name__)

FORMULAS = ("decay", "net_transfer", "hopping_element", "net_transfer_cubic")


@dataclass(frozen=True)
class SectorDecomposition:
    p_cooperative: OperatorMatrix
    h_c: OperatorMatrix
    h_n: OperatorMatrix
    h_cn: OperatorMatrix
    leakage_frobenius: float
    leakage_spectral: float
    reconstruction_error: float
    rank: int

    @property
    def leakage_ratio(self) -> float:
        """‖H_CN‖_F / ‖H_C‖_F"""
        norm_c = float(sparse_linalg.norm(self.h_c.entries, "fro"))
        return self.leakage_frobenius / norm_c if norm_c > 0 else 0.0

    def to_summary(self, expected_rank: Optional[int] = None, disorder_width: float = 0.0) -> SectorSummary:
        return SectorSummary(
            dimension=self.p_cooperative.dim,
            cooperative_rank=self.rank,
            expected_rank=expected_rank,
            reconstruction_error=self.reconstruction_error,
            leakage_frobenius=self.leakage_frobenius,
            leakage_spectral=self.leakage_spectral,
            leakage_ratio=self.leakage_ratio,
            disorder_width=disorder_width,
        )


def cooperative_projector(layout: SpaceLayout, spec: SystemSpec) -> OperatorMatrix:
    """対称スピン部分空間 ⊗ 対称ボゾン部分空間への射影 P_C"""
    projector = identity(layout.total_dim)
    for group in range(len(layout.spin_counts)):
        projector = projector @ symmetric_projector(layout, group).entries
    for label in layout.mode_labels:
        if label == "field":
            continue
        projector = projector @ symmetric_bath_projector(layout, label, spec.bath_basis).entries
    return OperatorMatrix(sparse.csr_matrix(projector), layout.total_dim, True, "P_C")


def expected_cooperative_rank(spec: SystemSpec) -> int:
    """(N+1)(M+1)·Π d（環境グループごとに対称モードのカットオフ d）"""
    rank = spec.group_a.sites + 1
    if spec.group_b is not None:
        rank *= spec.group_b.sites + 1
    if spec.field_mode is not None:
        rank *= spec.field_mode.cutoff
    for bath in (spec.bath_a, spec.bath_b):
        if bath is not None and bath.mode_count > 0:
            rank *= bath.cutoff
    return rank


def spectral_norm(matrix, tol: Optional[float] = None, max_iter: Optional[int] = None) -> float:
    """A†A のべき乗法による最大特異値（シード固定の初期ベクトル）"""
    tol = NUMERICS_CONFIG["power_iteration_tol"] if tol is None else tol
    max_iter = NUMERICS_CONFIG["power_iteration_max_iter"] if max_iter is None else max_iter
    matrix = sparse.csr_matrix(matrix)
    if matrix.nnz == 0 or not np.any(matrix.data):
        return 0.0
    frobenius = float(sparse_linalg.norm(matrix, "fro"))
    if frobenius <= NUMERICS_CONFIG["hermitian_tol"]:
        # 丸め誤差レベルの行列は ‖A‖₂ ≤ ‖A‖_F で上から抑える
        return frobenius
    adjoint = matrix.conj().T.tocsr()
    rng = np.random.default_rng(0)
    v = rng.standard_normal(matrix.shape[1]) + 1j * rng.standard_normal(matrix.shape[1])
    v /= np.linalg.norm(v)
    estimate = 0.0
    change = math.inf
    for _ in range(max_iter):
        w = adjoint @ (matrix @ v)
        value = float(np.linalg.norm(w))
        if value == 0.0:
            return 0.0
        v = w / value
        change = abs(value - estimate) / value
        if change <= tol:
            return math.sqrt(value)
        estimate = value
    raise ConvergenceError("power iteration for the spectral norm did not converge", change)


def decompose(hamiltonian: OperatorMatrix, projector: OperatorMatrix) -> SectorDecomposition:
    if hamiltonian.dim != projector.dim:
        raise DomainError(f"Hamiltonian dimension {hamiltonian.dim} != projector dimension {projector.dim}")
    h = hamiltonian.entries
    p = projector.entries
    q = identity(projector.dim) - p
    h_c = (p @ h @ p).tocsr()
    h_n = (q @ h @ q).tocsr()
    h_cn = (p @ h @ q + q @ h @ p).tocsr()

    residual = (h - h_c - h_n - h_cn).tocoo()
    reconstruction_error = float(np.max(np.abs(residual.data))) if residual.nnz else 0.0
    leakage_frobenius = float(sparse_linalg.norm(h_cn, "fro")) if h_cn.nnz else 0.0
    rank = int(round(float(p.diagonal().sum().real)))
    logger.debug("decomposition rank=%d leakage=%.3e", rank, leakage_frobenius)
    return SectorDecomposition(
        p_cooperative=projector,
        h_c=OperatorMatrix(h_c, h.shape[0], True, "H_C"),
        h_n=OperatorMatrix(h_n, h.shape[0], True, "H_N"),
        h_cn=OperatorMatrix(h_cn, h.shape[0], True, "H_CN"),
        leakage_frobenius=leakage_frobenius,
        leakage_spectral=spectral_norm(h_cn),
        reconstruction_error=reconstruction_error,
        rank=rank,
    )


def decompose_spec(spec: SystemSpec) -> SectorDecomposition:
    layout = build_layout(spec)
    return decompose(model_hamiltonian(spec, layout), cooperative_projector(layout, spec))


def emission_amplitude(N: int, n: int, gamma: float, m_from: int = 0) -> float:
    """Dicke状態 |n⟩ → |n−1⟩ の放出振幅 √(n(N−n+1))·√(m+1)·γ"""
    if not 1 <= n <= N:
        raise DomainError(f"excitation number {n} outside [1, {N}]")
    if m_from < 0:
        raise DomainError(f"photon number must be >= 0, got {m_from}")
    return math.sqrt(n * (N - n + 1)) * math.sqrt(m_from + 1) * gamma


def supertransfer_components(n: int, N: int, m: int, M: int, gamma: float) -> Tuple[float, float]:
    """A→B（順方向）と B→A（逆方向）の2乗行列要素"""
    if not 0 <= n <= N:
        raise DomainError(f"occupation n={n} outside [0, {N}]")
    if not 0 <= m <= M:
        raise DomainError(f"occupation m={m} outside [0, {M}]")
    g2 = gamma * gamma
    forward = g2 * n * (N - n + 1) * (m + 1) * (M - m)
    backward = g2 * (n + 1) * (N - n) * m * (M - m + 1)
    return float(forward), float(backward)


def supertransfer_rate(n: int, N: int, m: int, M: int, gamma: float) -> float:
    """正味の A→B 移動レート（負なら B→A が優勢）"""
    forward, backward = supertransfer_components(n, N, m, M, gamma)
    return forward - backward


def matrix_element(bra: StateVector, hamiltonian: OperatorMatrix, ket: StateVector) -> complex:
    if bra.dim != hamiltonian.dim or ket.dim != hamiltonian.dim:
        raise DomainError("state and operator dimensions differ")
    return complex(np.vdot(bra.amplitudes, hamiltonian.apply(ket)))


def golden_rule_rates(hamiltonian: OperatorMatrix, initial: StateVector, layout: SpaceLayout,
                      final_counts: Dict[Any, int]) -> float:
    """
    縮退した終状態の総当たり和 Σ_f |⟨f|H|i⟩|²

    final_counts はグループ（"A", "B"）またはモードラベルごとの励起数。
    条件を満たす全基底配置を終状態として列挙する。
    """
    mask = np.ones(layout.total_dim, dtype=bool)
    for key, count in final_counts.items():
        if isinstance(key, str) and key in layout.mode_labels:
            mask &= mode_quanta(layout, key) == count
        else:
            mask &= excitation_counts(layout, key) == count
    image = hamiltonian.apply(initial)
    return float(np.sum(np.abs(image[mask]) ** 2))


def dark_states(layout: SpaceLayout, group, n: int) -> List[StateVector]:
    """n 励起セクター内で Dicke 状態に直交する正規直交基底（他は基底状態）"""
    symmetric = dicke_state(layout, group, n).amplitudes
    support = np.nonzero(symmetric)[0]
    if support.size < 2:
        return []
    complement = null_space(symmetric[support].reshape(1, -1))
    states = []
    for column in complement.T:
        amps = np.zeros(layout.total_dim, dtype=complex)
        amps[support] = column
        states.append(StateVector(amps, layout))
    return states


def symmetric_channel_amplitude(hamiltonian: OperatorMatrix, state: StateVector, group, n_final: int,
                                label: str = "field", quanta: int = 1) -> complex:
    """⟨D(n_final), 対称モードに quanta 個|H|state⟩"""
    layout = state.layout
    bra = with_mode_excitation(dicke_state(layout, group, n_final), label, 0, quanta)
    return matrix_element(bra, hamiltonian, state)


# ---- スケーリング検証 ----

@lru_cache(maxsize=64)
def _dicke_system(N: int, cutoff: int, gamma: float) -> Tuple[SpaceLayout, OperatorMatrix]:
    spec = SystemSpec(group_a=SpinGroup(sites=N), field_mode=FieldMode(cutoff=cutoff), inter_coupling=gamma)
    layout = build_layout(spec)
    return layout, model_hamiltonian(spec, layout)


@lru_cache(maxsize=64)
def _hopping_system(N: int, M: int, gamma: float) -> Tuple[SpaceLayout, OperatorMatrix]:
    spec = SystemSpec(group_a=SpinGroup(sites=N), group_b=SpinGroup(sites=M), inter_coupling=gamma)
    layout = build_layout(spec)
    return layout, hopping_hamiltonian(spec, layout)


def _measure_decay(point: Dict[str, int], gamma: float) -> ScalingSample:
    N, n, m = int(point["N"]), int(point.get("n", 1)), int(point.get("m_from", 0))
    predicted = emission_amplitude(N, n, gamma, m) ** 2
    layout, h = _dicke_system(N, m + 2, gamma)
    ket = with_mode_excitation(dicke_state(layout, 0, n), "field", 0, m) if m else dicke_state(layout, 0, n)
    bra = with_mode_excitation(dicke_state(layout, 0, n - 1), "field", 0, m + 1)
    measured = abs(matrix_element(bra, h, ket)) ** 2
    return ScalingSample(params={"N": N, "n": n, "m_from": m}, predicted=predicted, measured=measured,
                         abs_error=abs(predicted - measured))


def _measure_hopping(point: Dict[str, int], gamma: float) -> ScalingSample:
    N, M = int(point["N"]), int(point["M"])
    n, m = int(point.get("n", 1)), int(point.get("m", 0))
    forward, _ = supertransfer_components(n, N, m, M, gamma)
    layout, h = _hopping_system(N, M, gamma)
    if n == 0 or m == M:
        measured = 0.0
    else:
        ket = dicke_product_state(layout, {0: n, 1: m})
        bra = dicke_product_state(layout, {0: n - 1, 1: m + 1})
        measured = abs(matrix_element(bra, h, ket)) ** 2
    return ScalingSample(params={"N": N, "M": M, "n": n, "m": m, "NM": N * M}, predicted=forward,
                         measured=measured, abs_error=abs(forward - measured))


def _golden_rule_net(N: int, M: int, n: int, m: int, gamma: float) -> float:
    layout, h = _hopping_system(N, M, gamma)
    initial = dicke_product_state(layout, {0: n, 1: m})
    forward = golden_rule_rates(h, initial, layout, {0: n - 1, 1: m + 1}) if n > 0 and m < M else 0.0
    backward = golden_rule_rates(h, initial, layout, {0: n + 1, 1: m - 1}) if m > 0 and n < N else 0.0
    return forward - backward


def _measure_net_transfer(point: Dict[str, int], gamma: float) -> ScalingSample:
    N, M = int(point["N"]), int(point["M"])
    n, m = int(point.get("n", 1)), int(point.get("m", 0))
    predicted = supertransfer_rate(n, N, m, M, gamma)
    measured = _golden_rule_net(N, M, n, m, gamma)
    return ScalingSample(params={"N": N, "M": M, "n": n, "m": m, "NM": N * M}, predicted=predicted,
                         measured=measured, abs_error=abs(predicted - measured))


def _measure_net_transfer_cubic(point: Dict[str, Any], gamma: float) -> ScalingSample:
    N, M = int(point["N"]), int(point["M"])
    filling = float(point.get("filling", 0.5))
    n = max(1, int(round(filling * N)))
    m = int(point.get("m", 0))
    predicted = supertransfer_rate(n, N, m, M, gamma)
    measured = _golden_rule_net(N, M, n, m, gamma)
    return ScalingSample(params={"N": N, "M": M, "n": n, "m": m, "filling": filling}, predicted=predicted,
                         measured=measured, abs_error=abs(predicted - measured))


_MEASURES: Dict[str, Tuple[Callable, str, float, Callable[[ScalingSample], bool]]] = {
    # formula: (測定関数, スケーリング変数, 理論指数, フィット対象の条件)
    "decay": (_measure_decay, "N", 1.0, lambda s: s.params["n"] == 1 and s.params["m_from"] == 0),
    "hopping_element": (_measure_hopping, "NM", 1.0, lambda s: s.params["n"] == 1 and s.params["m"] == 0),
    "net_transfer": (_measure_net_transfer, "NM", 1.0, lambda s: s.params["n"] == 1 and s.params["m"] == 0),
    "net_transfer_cubic": (_measure_net_transfer_cubic, "N", 2.0, lambda s: True),
}


def verify_scaling(formula: str, grid: Sequence[Dict[str, Any]], gamma: float = 1.0,
                   max_workers: Optional[int] = None, progress_callback: Optional[Callable] = None) -> RateScalingReport:
    """
    グリッド上で厳密な行列要素（または総当たりの黄金律和）を計算し、閉形式と比較する

    指数フィットは両対数で、対象行（単一励起の行など）が4点以上あるときのみ行う。
    """
    if formula not in _MEASURES:
        raise DomainError(f"unknown formula {formula!r}; expected one of {FORMULAS}")
    checked = BaseDataValidator.validate_grid(grid, ["N"] if formula == "decay" else ["N", "M"])
    if not checked["valid"]:
        raise DomainError("; ".join(checked["errors"]))
    measure, variable, expected, selector = _MEASURES[formula]
    samples = map_ordered(lambda point: measure(point, gamma), list(grid), max_workers, progress_callback)

    fit_rows = [s for s in samples if selector(s)]
    xs = [s.params[variable] for s in fit_rows]
    exponent = residual = None
    notes = None
    if len(fit_rows) >= 2 and len(set(xs)) == 1:
        raise DegenerateFitError(f"{variable} takes a single value across the {formula} grid")
    if len(fit_rows) >= 4:
        exponent, residual = loglog_fit(xs, [s.measured for s in fit_rows])
    else:
        notes = f"exponent not fitted: {len(fit_rows)} qualifying grid points (need 4)"
    if formula == "net_transfer_cubic":
        notes = "expected exponent is the large-N limit; finite grids fit below it"

    report = RateScalingReport(
        formula=formula,
        scaling_variable=variable,
        samples=samples,
        fitted_exponent=exponent,
        fit_residual=residual,
        expected_exponent=expected,
        max_abs_error=max(s.abs_error for s in samples),
        notes=notes,
    )
    logger.info("verify_scaling %s: %d points, exponent=%s, max_abs_error=%.3e",
                formula, len(samples), exponent, report.max_abs_error)
    return report


def leakage_vs_disorder(spec: SystemSpec, widths: Sequence[float],
                        max_workers: Optional[int] = None) -> Tuple[pd.DataFrame, float, float]:
    """
    固定シードのサイト乱れ幅ごとの漏れノルムと、原点を通る直線フィット

    Returns:
        (表, 傾き, R²)
    """
    widths = [float(w) for w in widths]
    if not widths:
        raise DomainError("disorder width list is empty")

    def _one(width: float) -> Dict[str, float]:
        decomposition = decompose_spec(apply_site_disorder(spec, width))
        return {
            "disorder_width": width,
            "leakage_frobenius": decomposition.leakage_frobenius,
            "leakage_spectral": decomposition.leakage_spectral,
            "leakage_ratio": decomposition.leakage_ratio,
        }

    frame = pd.DataFrame(map_ordered(_one, widths, max_workers))
    slope, r2 = fit_through_origin(frame["disorder_width"], frame["leakage_frobenius"])
    logger.info("leakage vs disorder: slope=%.6g R^2=%.6f", slope, r2)
    return frame, slope, r2
