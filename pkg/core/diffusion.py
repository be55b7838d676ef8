"""
LH2アレイにおける励起子輸送の粗視化モデル

コヒーレントなバーストを、非コヒーレントなホッピング率 γ で起こる ℓ = αγτ 単位の
瞬間ジャンプとして扱う。時間は ps、長さは錯体単位（表示用に nm へ換算）。
"""
import logging
import math
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .base_service import BaseDataValidator
from .exceptions import DomainError
from .models import DiffusionConfig, DiffusionResult
from .utils import map_ordered

logger = logging.getLogger(__name__)

SWEEP_AXES = ("alpha", "tau", "gamma")
WALKER_CHUNK = 2_000


def _positive(**values: float):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def effective_step_length(alpha: float, gamma: float, tau: float) -> float:
    """ℓ = αγτ（コヒーレントバースト1回あたりの格子単位数）"""
    _positive(alpha=alpha, gamma=gamma, tau=tau)
    return alpha * gamma * tau


def required_step_length(L: float, gamma: float, T: float) -> float:
    """寿命内に距離 L へ届くのに必要なステップ長 L/√(γT)"""
    _positive(L=L, gamma=gamma, T=T)
    return L / math.sqrt(gamma * T)


def naive_hop_count_and_time(L: float, T: float) -> Tuple[float, float]:
    """増強なしの拡散で必要なホップ数 L² と1ホップあたりの時間 T/L²"""
    if L < 1:
        raise DomainError(f"L must be >= 1, got {L}")
    _positive(T=T)
    hops = float(L) ** 2
    return hops, T / hops


def required_alpha_tau(L: float, gamma: float, T: float) -> float:
    """ατ の下限（ps）"""
    return required_step_length(L, gamma, T) / gamma


def required_decoherence_time(alpha: float, L: float, gamma: float, T: float) -> float:
    _positive(alpha=alpha)
    return required_alpha_tau(L, gamma, T) / alpha


def native_hop_gap(native_hop_time: float, L: float, T: float) -> float:
    """実際のホッピング時間と、増強なし拡散が要求するホッピング時間の比"""
    _positive(native_hop_time=native_hop_time)
    _, needed = naive_hop_count_and_time(L, T)
    return native_hop_time / needed


def _walker_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _walk_chunk(config: DiffusionConfig, ell: float, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray]:
    """ウォーカー start..stop−1 の (二乗変位, ホップ数)"""
    count = stop - start
    r2 = np.empty(count)
    hops = np.empty(count, dtype=np.int64)
    mean_hops = config.gamma * config.lifetime_T
    for offset in range(count):
        rng = _walker_rng(config.rng_seed, start + offset)
        if config.lifetime_model == "exponential":
            lam = config.gamma * rng.exponential(config.lifetime_T)
        else:
            lam = mean_hops
        k = int(rng.poisson(lam))
        if config.lattice_dim == 1:
            right = int(rng.binomial(k, 0.5))
            x = (2 * right - k) * ell
            r2[offset] = x * x
        else:
            c = rng.multinomial(k, [0.25, 0.25, 0.25, 0.25])
            x = (int(c[0]) - int(c[1])) * ell
            y = (int(c[2]) - int(c[3])) * ell
            r2[offset] = x * x + y * y
        hops[offset] = k
    return r2, hops


def simulate_walk(config: DiffusionConfig, max_workers: Optional[int] = None) -> DiffusionResult:
    """
    コヒーレントステップ付きランダムウォークのモンテカルロ

    ウォーカーごとに (seed, index) から独立な乱数列を作るので、結果は並列度に依存しない。
    """
    if config.walkers < 1:
        raise DomainError("at least one walker is required")
    if config.lattice_dim not in (1, 2):
        raise DomainError(f"lattice_dim must be 1 or 2, got {config.lattice_dim}")
    ell = effective_step_length(config.alpha, config.gamma, config.tau)
    required = required_step_length(config.target_L, config.gamma, config.lifetime_T)

    bounds = [(s, min(s + WALKER_CHUNK, config.walkers)) for s in range(0, config.walkers, WALKER_CHUNK)]
    chunks = map_ordered(lambda b: _walk_chunk(config, ell, b[0], b[1]), bounds, max_workers)
    r2 = np.concatenate([c[0] for c in chunks])
    hops = np.concatenate([c[1] for c in chunks])

    mean_r2 = float(np.mean(r2))
    rms = math.sqrt(mean_r2)
    rms_se = hops_se = None
    if config.walkers > 1:
        se_r2 = float(np.std(r2, ddof=1)) / math.sqrt(config.walkers)
        rms_se = se_r2 / (2.0 * rms) if rms > 0 else 0.0
        hops_se = float(np.std(hops, ddof=1)) / math.sqrt(config.walkers)
    reaching = float(np.mean(np.sqrt(r2) >= config.target_L))

    logger.debug("walk alpha=%g gamma=%g tau=%g: ell=%.6g rms=%.6g", config.alpha, config.gamma, config.tau, ell, rms)
    return DiffusionResult(
        step_length_ell=ell,
        required_step_length=required,
        rms_displacement_units=rms,
        rms_standard_error=rms_se,
        rms_displacement_nm=rms * config.complex_diameter,
        incoherent_hops_mean=float(np.mean(hops)),
        incoherent_hops_se=hops_se,
        condition_met=ell > required,
        walkers_reaching_target=reaching,
        walkers=config.walkers,
    )


def validate_axes(axes: Dict[str, Sequence[float]]) -> Dict[str, List[float]]:
    checked = BaseDataValidator.validate_axes(axes, SWEEP_AXES)
    if not checked["valid"]:
        raise DomainError("; ".join(checked["errors"]))
    resolved = {}
    for name in SWEEP_AXES:
        if name not in axes:
            continue
        grid = [float(v) for v in axes[name]]
        steps = np.diff(grid)
        if len(grid) > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise DomainError(f"sweep axis {name!r} must be strictly monotone")
        resolved[name] = sorted(grid)
    return resolved


def sweep(template: DiffusionConfig, axes: Dict[str, Sequence[float]],
          max_workers: Optional[int] = None) -> pd.DataFrame:
    """
    alpha / tau / gamma の全組合せでウォークを実行

    行は (alpha, tau, gamma) の値の辞書式順。各点は同じシードを使う。
    """
    resolved = validate_axes(axes)
    names = list(resolved)
    points = [dict(zip(names, values)) for values in product(*(resolved[n] for n in names))]

    def _one(point: Dict[str, float]) -> Dict[str, float]:
        config = template.model_copy(update=point)
        result = simulate_walk(config)
        row = dict(point)
        row.update(result.model_dump())
        return row

    rows = map_ordered(_one, points, max_workers)
    logger.info("diffusion sweep: %d grid points over %s", len(rows), names)
    return pd.DataFrame(rows)


def feasibility_boundary(template: DiffusionConfig, alpha_grid: Sequence[float]) -> pd.DataFrame:
    """α ごとの必要デコヒーレンス時間 τ_min（αγτ = L/√(γT)）"""
    rows = []
    for alpha in alpha_grid:
        tau_min = required_decoherence_time(alpha, template.target_L, template.gamma, template.lifetime_T)
        rows.append({"alpha": float(alpha), "tau_min_ps": tau_min, "alpha_tau_ps": alpha * tau_min})
    return pd.DataFrame(rows)


def headline_reproduction(L: float = 300.0, lifetimes_ns: Sequence[float] = (1.0, 1.5),
                          native_hop_time_ps: float = 5.0, alpha: float = 5.0) -> pd.DataFrame:
    """
    輸送に関する見積もりの再現表

    各行: quantity, computed, reference, criterion, passed
    """
    rows = []
    hops, _ = naive_hop_count_and_time(L, lifetimes_ns[0] * 1000.0)
    rows.append({"quantity": "naive_hop_count", "computed": hops, "reference": 1e5,
                 "criterion": "same order of magnitude", "passed": round(math.log10(hops)) == 5})

    hop_times_fs = []
    for lifetime in lifetimes_ns:
        _, hop_time_ps = naive_hop_count_and_time(L, lifetime * 1000.0)
        hop_times_fs.append(hop_time_ps * 1000.0)
        rows.append({"quantity": f"naive_hop_time_fs_T{lifetime:g}ns", "computed": hop_time_ps * 1000.0,
                     "reference": 12.5, "criterion": "range overlaps [10, 15] fs", "passed": None})
    overlap = min(hop_times_fs) <= 15.0 and max(hop_times_fs) >= 10.0
    for row in rows[1:]:
        row["passed"] = overlap

    T_ps = lifetimes_ns[0] * 1000.0
    slow = required_alpha_tau(L, 1.0 / native_hop_time_ps, T_ps)
    rows.append({"quantity": "alpha_tau_ps_hop5ps", "computed": slow, "reference": 100.0,
                 "criterion": "within 10%", "passed": abs(slow - 100.0) <= 10.0})
    fast = required_alpha_tau(L, 1.0 / 2.0, T_ps)
    rows.append({"quantity": "alpha_tau_ps_hop2ps", "computed": fast, "reference": 20.0,
                 "criterion": "within a factor 1.5", "passed": 20.0 / 1.5 <= fast <= 20.0 * 1.5})
    tau_min = required_decoherence_time(alpha, L, 1.0 / native_hop_time_ps, T_ps)
    rows.append({"quantity": f"tau_min_ps_alpha{alpha:g}", "computed": tau_min, "reference": 20.0,
                 "criterion": "within 10%", "passed": abs(tau_min - 20.0) <= 2.0})
    gap = native_hop_gap(native_hop_time_ps, L, T_ps)
    rows.append({"quantity": "native_hop_gap", "computed": gap, "reference": 1e3,
                 "criterion": "between 10^2.5 and 10^3", "passed": 10 ** 2.5 <= gap <= 1e3})
    return pd.DataFrame(rows)
