"""
時間発展

- evolve: Lanczos（Krylov部分空間）による exp(−iHt)ψ0
- short_time_rate: 短時間遷移確率 P(t) ≈ R t² から R を抽出
- dephasing_evolve: 純位相緩和のLindblad方程式（RK4 固定刻み）
- rabi_frequency: 2準位還元での個数振動の角周波数
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sparse
from scipy.linalg import expm
from scipy.optimize import curve_fit

from config.settings import NUMERICS_CONFIG
from .exceptions import (CapacityError, ConvergenceError, DegenerateFitError, DomainError,
                         RegimeViolationError, SpanLeakageError, TruncationError)
from .hilbert import (OperatorMatrix, SpaceLayout, StateVector, basis_state, dicke_state,
                      excitation_number_operator, make_layout, superpose, top_fock_mask)
from .models import DephasingModel, RateScalingReport, ScalingSample
from .utils import loglog_fit, map_ordered

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PropagationResult:
    times: np.ndarray
    observables: Dict[str, np.ndarray]
    truncation_leak: float = 0.0
    norm_drift: float = 0.0
    energy_drift: float = 0.0
    excitation_drift: float = 0.0
    trace_drift: float = 0.0
    min_eigenvalue: float = 0.0
    population_drift: float = 0.0
    valid: bool = True
    states: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def require_valid(self) -> "PropagationResult":
        if self.truncation_leak >= NUMERICS_CONFIG["truncation_leak_limit"]:
            raise TruncationError(self.truncation_leak, NUMERICS_CONFIG["truncation_leak_limit"])
        return self

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self.times})
        for name, values in self.observables.items():
            frame[name] = values
        return frame


def _check_grid(t_grid: Sequence[float]) -> np.ndarray:
    times = np.asarray(t_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("time grid must be a non-empty vector")
    if np.any(np.diff(times) <= 0):
        raise DomainError("time grid must be strictly increasing")
    return times


def _krylov_step(h: sparse.csr_matrix, v: np.ndarray, dt: float, tol: float, max_dim: int) -> Tuple[np.ndarray, float]:
    """
    Lanczos 法による exp(−iH dt) v

    誤差推定は β_m |[exp(−iT dt) e_1]_m| ‖v‖。次元を1つずつ増やし tol 以下で打ち切る。
    """
    beta0 = float(np.linalg.norm(v))
    if beta0 == 0.0:
        return v.copy(), 0.0
    dim = v.shape[0]
    max_dim = min(max_dim, dim)
    basis = np.zeros((max_dim, dim), dtype=complex)
    alphas: list = []
    betas: list = []
    basis[0] = v / beta0
    error = math.inf
    coeffs = np.ones(1, dtype=complex)
    for m in range(max_dim):
        w = h @ basis[m]
        alpha = float(np.vdot(basis[m], w).real)
        w = w - alpha * basis[m]
        if m > 0:
            w = w - betas[-1] * basis[m - 1]
        # 完全再直交化
        w = w - basis[:m + 1].T @ (basis[:m + 1].conj() @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        tri = np.diag(alphas) + np.diag(betas, 1) + np.diag(betas, -1)
        coeffs = expm(-1j * dt * tri)[:, 0]
        error = beta0 * beta * abs(coeffs[-1])
        if beta < 1e-14 * max(1.0, abs(alpha)):
            error = 0.0
            break
        if error <= tol or m + 1 == max_dim:
            break
        betas.append(beta)
        basis[m + 1] = w / beta
    size = len(alphas)
    return beta0 * (basis[:size].T @ coeffs), error


def propagate(h: sparse.csr_matrix, v: np.ndarray, dt: float, tol: float) -> np.ndarray:
    """dt だけ進める（誤差が tol を超える場合は刻みを半分にして再試行）"""
    max_dim = NUMERICS_CONFIG["krylov_max_dim"]
    budget = NUMERICS_CONFIG["krylov_max_substeps"]
    remaining = dt
    step = dt
    substeps = 0
    worst = 0.0
    while remaining > 0:
        step = min(step, remaining)
        w, error = _krylov_step(h, v, step, tol, max_dim)
        if error <= tol:
            v = w
            remaining -= step
            substeps += 1
            worst = max(worst, error)
            if substeps > budget:
                raise ConvergenceError("Krylov propagation exceeded the substep budget", worst)
            continue
        step /= 2.0
        substeps += 1
        if substeps > budget or step < dt * 1e-12:
            raise ConvergenceError("Krylov propagation could not reach the step tolerance", error)
    return v


def evolve(hamiltonian: OperatorMatrix, psi0: StateVector, t_grid: Sequence[float], tol: float = 1e-12,
           track: Optional[Dict[str, StateVector]] = None, store_states: bool = False) -> PropagationResult:
    """
    ψ(t) = exp(−iHt)ψ0 を t_grid の各時刻で求める

    track に渡した状態 φ ごとに |⟨φ|ψ(t)⟩|² を記録する。
    """
    if not hamiltonian.hermitian:
        raise DomainError(f"Hamiltonian {hamiltonian.label!r} is not Hermitian")
    if hamiltonian.dim != psi0.dim:
        raise DomainError("Hamiltonian and state dimensions differ")
    if abs(psi0.norm() - 1.0) > 1e-10:
        raise DomainError(f"initial state is not normalized (norm {psi0.norm():.12f})")
    times = _check_grid(t_grid)
    track = track or {}
    layout = psi0.layout
    h = hamiltonian.entries
    n_exc = excitation_number_operator(layout).entries
    top = top_fock_mask(layout)

    observables = {name: np.zeros(times.size) for name in track}
    observables["norm"] = np.zeros(times.size)
    stored = np.zeros((times.size, psi0.dim), dtype=complex) if store_states else None
    energies = np.zeros(times.size)
    excitations = np.zeros(times.size)
    leak = 0.0

    psi = psi0.amplitudes.copy()
    for k, t in enumerate(times):
        if k > 0:
            psi = propagate(h, psi, t - times[k - 1], tol)
        for name, target in track.items():
            observables[name][k] = abs(np.vdot(target.amplitudes, psi)) ** 2
        observables["norm"][k] = np.linalg.norm(psi)
        energies[k] = float(np.vdot(psi, h @ psi).real)
        excitations[k] = float(np.vdot(psi, n_exc @ psi).real)
        if top.any():
            leak = max(leak, float(np.sum(np.abs(psi[top]) ** 2)))
        if stored is not None:
            stored[k] = psi

    limit = NUMERICS_CONFIG["truncation_leak_limit"]
    valid = leak < limit
    if not valid:
        logger.warning("truncation leak %.3e exceeds %.1e; run flagged invalid", leak, limit)
    return PropagationResult(
        times=times,
        observables=observables,
        truncation_leak=leak,
        norm_drift=float(np.max(np.abs(observables["norm"] - 1.0))),
        energy_drift=float(np.max(np.abs(energies - energies[0])) / max(abs(energies[0]), 1.0)),
        excitation_drift=float(np.max(np.abs(excitations - excitations[0]))),
        valid=valid,
        states=stored,
    )


def fit_short_time_rate(times: Sequence[float], population: Sequence[float]) -> Tuple[float, float]:
    """
    P(t) = R t² + c t⁴ の最小二乗フィット

    Returns:
        (R, 相対残差 RMS/max P)
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(population, dtype=float)
    peak = float(np.max(np.abs(p)))
    design = np.column_stack([t ** 2, t ** 4])
    coeffs, *_ = np.linalg.lstsq(design, p, rcond=None)
    if peak < 1e-30:
        return float(coeffs[0]), 0.0
    residual = float(np.sqrt(np.mean((design @ coeffs - p) ** 2)) / peak)
    return float(coeffs[0]), residual


def short_time_rate(hamiltonian: OperatorMatrix, psi0: StateVector, target: StateVector, t_max: float,
                    n_points: int = 21) -> float:
    """短時間の遷移確率から2乗遷移振幅 R = |⟨f|H|i⟩|² を求める"""
    if abs(target.overlap(psi0)) > 1e-10:
        raise DomainError("target state must be orthogonal to the initial state")
    if t_max <= 0:
        raise DomainError(f"t_max must be positive, got {t_max}")
    times = np.linspace(0.0, t_max, n_points)
    result = evolve(hamiltonian, psi0, times, track={"target": target}).require_valid()
    population = result.observables["target"]
    pop_limit = NUMERICS_CONFIG["short_time_population_limit"]
    if population[-1] >= pop_limit:
        raise RegimeViolationError(f"target population {population[-1]:.3e} at t_max is not below {pop_limit}",
                                   population[-1])
    rate, residual = fit_short_time_rate(times, population)
    limit = NUMERICS_CONFIG["short_time_residual_limit"]
    if residual > limit:
        raise RegimeViolationError("quadratic short-time fit failed; reduce t_max", residual)
    logger.debug("short-time rate R=%.12g (fit residual %.2e)", rate, residual)
    return rate


# ---- 純位相緩和 ----

def dephasing_rate_matrix(layout: SpaceLayout, model: DephasingModel) -> np.ndarray:
    """
    対角ジャンプ演算子の散逸子 D(ρ)_ab = decay_ab ρ_ab の係数

    独立: −2γ × (σ_z が異なるサイト数)、集団: −2γ (Δn)²
    """
    spins = sum(layout.spin_counts)
    digits = layout.digits[:, :spins].astype(np.int64)
    if model.kind == "independent":
        differing = np.zeros((layout.total_dim, layout.total_dim))
        for slot in range(spins):
            d = digits[:, slot]
            differing += (d[:, None] != d[None, :])
        return -2.0 * model.rate * differing
    n = digits.sum(axis=1)
    return -2.0 * model.rate * (n[:, None] - n[None, :]) ** 2.0


def _lindblad_rhs(h: np.ndarray, decay: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return -1j * (h @ rho - rho @ h) + decay * rho


def _rk4(h: np.ndarray, decay: np.ndarray, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = _lindblad_rhs(h, decay, rho)
    k2 = _lindblad_rhs(h, decay, rho + 0.5 * dt * k1)
    k3 = _lindblad_rhs(h, decay, rho + 0.5 * dt * k2)
    k4 = _lindblad_rhs(h, decay, rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def density_matrix(state: StateVector) -> np.ndarray:
    return np.outer(state.amplitudes, state.amplitudes.conj())


def dephasing_evolve(hamiltonian: OperatorMatrix, model: DephasingModel, rho0: np.ndarray, t_grid: Sequence[float],
                     layout: SpaceLayout, pairs: Optional[Dict[str, Tuple[StateVector, StateVector]]] = None,
                     max_refinements: int = 8) -> PropagationResult:
    """
    dρ/dt = −i[H, ρ] + Σ_k γ (L_k ρ L_k† − ½{L_k†L_k, ρ})

    L_k = σ_z^j（independent）または Σ_j σ_z^j（collective）。
    pairs の (a, b) ごとに |⟨a|ρ(t)|b⟩| を記録する。各区間は RK4 で積分し、
    トレース・正値性のゲートを満たさなければ刻みを半分にしてやり直す。
    """
    dim = layout.total_dim
    budget = NUMERICS_CONFIG["max_density_dimension"]
    if dim > budget:
        raise CapacityError(dim, budget, "density matrix")
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (dim, dim):
        raise DomainError(f"density matrix shape {rho.shape} != ({dim}, {dim})")
    if abs(np.trace(rho) - 1.0) > 1e-10 or np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise DomainError("initial density matrix must be Hermitian with unit trace")
    floor = NUMERICS_CONFIG["positivity_floor"]
    if np.linalg.eigvalsh(rho).min() < floor:
        raise DomainError("initial density matrix is not positive semidefinite")
    times = _check_grid(t_grid)
    pairs = pairs or {}

    h = hamiltonian.dense()
    decay = dephasing_rate_matrix(layout, model)
    scale = 2.0 * float(np.max(np.sum(np.abs(h), axis=1))) + float(np.max(np.abs(decay)))
    base_step = 0.05 / scale if scale > 0 else math.inf
    trace_limit = NUMERICS_CONFIG["trace_drift_limit"]

    observables = {name: np.zeros(times.size) for name in pairs}
    populations0 = np.diag(rho).real.copy()
    trace_drift = population_drift = 0.0
    min_eig = float(np.linalg.eigvalsh(rho).min())

    for k, t in enumerate(times):
        if k > 0:
            interval = t - times[k - 1]
            for refinement in range(max_refinements + 1):
                steps = max(1, int(math.ceil(interval / base_step)) * 2 ** refinement)
                dt = interval / steps
                candidate = rho
                for _ in range(steps):
                    candidate = _rk4(h, decay, candidate, dt)
                candidate = 0.5 * (candidate + candidate.conj().T)
                drift = abs(np.trace(candidate).real - 1.0)
                lowest = float(np.linalg.eigvalsh(candidate).min())
                if drift <= trace_limit and lowest >= floor:
                    break
                logger.debug("refining Lindblad step at t=%.6g (trace drift %.2e, min eig %.2e)", t, drift, lowest)
            else:
                raise ConvergenceError("Lindblad integration violates trace/positivity gates", max(drift, -lowest))
            rho = candidate
            trace_drift = max(trace_drift, drift)
            min_eig = min(min_eig, lowest)
            population_drift = max(population_drift, float(np.max(np.abs(np.diag(rho).real - populations0))))
        for name, (a, b) in pairs.items():
            observables[name][k] = abs(np.vdot(a.amplitudes, rho @ b.amplitudes))

    return PropagationResult(
        times=times,
        observables=observables,
        trace_drift=trace_drift,
        min_eigenvalue=min_eig,
        population_drift=population_drift,
    )


def zero_hamiltonian(layout: SpaceLayout) -> OperatorMatrix:
    return OperatorMatrix(sparse.csr_matrix((layout.total_dim, layout.total_dim), dtype=complex),
                          layout.total_dim, True, "H_0")


def fit_decay_rate(times: Sequence[float], magnitudes: Sequence[float]) -> float:
    """|c(t)| = c0 e^{−Γt} の対数線形フィットによる Γ"""
    t = np.asarray(times, dtype=float)
    c = np.asarray(magnitudes, dtype=float)
    if np.any(c <= 0):
        raise DegenerateFitError("coherence vanished inside the fit window")
    slope, _ = np.polyfit(t, np.log(c), 1)
    return float(-slope)


def coherence_decay_rate(model: DephasingModel, N: int, n: int, t_end: Optional[float] = None,
                         n_points: int = 21) -> float:
    """H = 0 で (|0…0⟩ + |D_n⟩)/√2 のコヒーレンス ⟨0|ρ|D_n⟩ の減衰率"""
    if not 1 <= n <= N:
        raise DomainError(f"excitation number {n} outside [1, {N}]")
    layout = make_layout([N])
    ground = basis_state(layout, [0] * N)
    excited = dicke_state(layout, 0, n)
    psi = superpose([ground, excited])
    if t_end is None:
        t_end = 0.5 / (2.0 * model.rate * N * N) if model.rate > 0 else 1.0
    times = np.linspace(0.0, t_end, n_points)
    result = dephasing_evolve(zero_hamiltonian(layout), model, density_matrix(psi), times, layout,
                              pairs={"coherence": (ground, excited)})
    return fit_decay_rate(times, result.observables["coherence"])


def measure_decoherence_scaling(model: DephasingModel, N: int, n_range: Sequence[int],
                                max_workers: Optional[int] = None) -> RateScalingReport:
    """
    Dicke 状態 |n⟩ と基底状態の間のコヒーレンス減衰率の n 依存性

    基準は同じモデルでの N=1, n=1 の測定値。予測は independent で n 倍、collective で n² 倍。
    """
    n_values = [int(n) for n in n_range]
    for n in n_values:
        if not 1 <= n <= N:
            raise DomainError(f"excitation number {n} outside [1, {N}]")
    t_end = 0.5 / (2.0 * model.rate * N * N) if model.rate > 0 else 1.0
    baseline = coherence_decay_rate(model, 1, 1, t_end=t_end)
    rates = map_ordered(lambda n: coherence_decay_rate(model, N, n, t_end=t_end), n_values, max_workers)
    if max(abs(r) for r in rates) < 1e-10:
        raise DegenerateFitError("all coherence decay rates vanish; no exponent to fit")
    power = 1 if model.kind == "independent" else 2
    samples = [
        ScalingSample(params={"N": N, "n": n}, predicted=baseline * n ** power, measured=rate,
                      abs_error=abs(baseline * n ** power - rate))
        for n, rate in zip(n_values, rates)
    ]
    exponent = residual = None
    if len(samples) >= 4:
        exponent, residual = loglog_fit(n_values, rates)
    notes = (
        "independent sigma_z dephasing: coherence decays n times faster than a single exciton"
        if model.kind == "independent" else
        "collective sigma_z dephasing decays as (delta n)^2, not linearly in n; "
        "coherences inside a fixed excitation sector do not decay"
    )
    return RateScalingReport(
        formula=f"dephasing_{model.kind}",
        scaling_variable="n",
        samples=samples,
        fitted_exponent=exponent,
        fit_residual=residual,
        expected_exponent=float(power),
        max_abs_error=max(s.abs_error for s in samples),
        notes=notes,
    )


def bures_angle(fidelity: float) -> float:
    return float(math.acos(min(1.0, math.sqrt(max(fidelity, 0.0)))))


def _product_state_angle(N: int, n: int, rate: float, t_star: float) -> float:
    layout = make_layout([N])
    # 先頭 n サイトをそれぞれ (|0⟩+|1⟩)/√2 にした直積状態
    amps = np.zeros(layout.total_dim, dtype=complex)
    mask = np.ones(layout.total_dim, dtype=bool)
    for slot in range(n, N):
        mask &= layout.digits[:, slot] == 0
    amps[mask] = 1.0
    psi = StateVector(amps / np.linalg.norm(amps), layout)
    model = DephasingModel(kind="independent", rate=rate)
    result = dephasing_evolve(zero_hamiltonian(layout), model, density_matrix(psi), [0.0, t_star], layout,
                              pairs={"fidelity": (psi, psi)})
    return bures_angle(result.observables["fidelity"][-1])


def measure_product_state_dephasing(N: int, n_range: Sequence[int], rate: float,
                                    t_star: Optional[float] = None,
                                    max_workers: Optional[int] = None) -> RateScalingReport:
    """
    無相関な n 励起直積状態の独立位相緩和

    指標は短時間 t* での Bures 角 arccos√F。1−F ≈ nγt* なので角度は √n に比例する。
    """
    if rate <= 0:
        raise DomainError("product-state dephasing needs a positive rate")
    n_values = [int(n) for n in n_range]
    for n in n_values:
        if not 1 <= n <= N:
            raise DomainError(f"excitation number {n} outside [1, {N}]")
    t_star = 1e-3 / rate if t_star is None else t_star
    baseline = _product_state_angle(1, 1, rate, t_star)
    angles = map_ordered(lambda n: _product_state_angle(N, n, rate, t_star), n_values, max_workers)
    samples = [
        ScalingSample(params={"N": N, "n": n}, predicted=baseline * math.sqrt(n), measured=angle,
                      abs_error=abs(baseline * math.sqrt(n) - angle))
        for n, angle in zip(n_values, angles)
    ]
    exponent = residual = None
    if len(samples) >= 4:
        exponent, residual = loglog_fit(n_values, angles)
    return RateScalingReport(
        formula="dephasing_product_bures",
        scaling_variable="n",
        samples=samples,
        fitted_exponent=exponent,
        fit_residual=residual,
        expected_exponent=0.5,
        max_abs_error=max(s.abs_error for s in samples),
        notes=f"Bures angle arccos(sqrt(F)) at t*={t_star:.6g} under independent dephasing",
    )


# ---- Rabi 振動 ----

def _sin2(t, amplitude, omega):
    return amplitude * np.sin(omega * t) ** 2


def rabi_frequency(hamiltonian: OperatorMatrix, psi_a: StateVector, psi_b: StateVector,
                   n_points: int = 201) -> float:
    """
    ψa から出発したときの |⟨ψb|ψ(t)⟩|² の振動角周波数

    P(t) = A sin²(Ωt) を1周期分フィットし 2Ω を返す。
    """
    if abs(psi_a.overlap(psi_b)) > 1e-10:
        raise DomainError("psi_a and psi_b must be orthogonal")
    coupling = abs(complex(np.vdot(psi_b.amplitudes, hamiltonian.apply(psi_a))))
    if coupling == 0.0:
        raise DegenerateFitError("states are not coupled; no oscillation")
    detuning = (complex(np.vdot(psi_a.amplitudes, hamiltonian.apply(psi_a))).real
                - complex(np.vdot(psi_b.amplitudes, hamiltonian.apply(psi_b))).real)
    omega_guess = math.sqrt(coupling ** 2 + 0.25 * detuning ** 2)
    times = np.linspace(0.0, math.pi / omega_guess, n_points)
    result = evolve(hamiltonian, psi_a, times, track={"a": psi_a, "b": psi_b})
    pop_a, pop_b = result.observables["a"], result.observables["b"]
    leakage = float(np.max(1.0 - pop_a - pop_b))
    limit = NUMERICS_CONFIG["span_leakage_limit"]
    if leakage > limit:
        raise SpanLeakageError(leakage, limit)
    (amplitude, omega), _ = curve_fit(_sin2, times, pop_b, p0=(coupling ** 2 / omega_guess ** 2, omega_guess),
                                      maxfev=10_000)
    logger.debug("Rabi fit: amplitude=%.9f omega=%.12g", amplitude, omega)
    return 2.0 * abs(float(omega))
