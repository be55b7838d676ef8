"""
模型ハミルトニアンの構築（ħ = 1）

- dicke_hamiltonian: N個の2準位系 + 単一場モード（Dicke模型）
- hopping_hamiltonian: 2グループ間の対称ホッピング
- full_hamiltonian: 環境モード・グループ内結合を含む2リング模型

σ_± は励起の上げ下げ（|0⟩→|1⟩ が σ_+）として解釈する。
"""
import logging
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sparse

from .exceptions import ConfigurationError, DomainError
from .hilbert import OperatorMatrix, SpaceLayout, build_layout, collective_mode_transform
from .models import SystemSpec

logger = logging.getLogger(__name__)

Move = Tuple[int, int]  # (slot, +1 = 上げ／生成, -1 = 下げ／消滅)


class _TermCollector:
    """
    疎行列の項を (row, col, value) で蓄積する

    スピンもボゾンも桁の昇降で表し、振幅は √(n+1)（上げ）, √n（下げ）。
    スピン（基数2）ではどちらも 1 になる。
    """

    def __init__(self, layout: SpaceLayout):
        self.layout = layout
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []

    def add_diagonal(self, values: np.ndarray):
        idx = np.arange(self.layout.total_dim)
        keep = values != 0
        self.rows.append(idx[keep])
        self.cols.append(idx[keep])
        self.vals.append(values[keep].astype(complex))

    def add_ladder(self, moves: Sequence[Move], coeff: complex, with_adjoint: bool = False):
        if coeff == 0:
            return
        layout = self.layout
        digits = layout.digits
        mask = np.ones(layout.total_dim, dtype=bool)
        amp = np.ones(layout.total_dim)
        target = np.arange(layout.total_dim, dtype=np.int64)
        current = {}
        for slot, step in moves:
            digit = current.get(slot, digits[:, slot].astype(np.int64))
            radix = layout.radices[slot]
            if step > 0:
                mask &= digit < radix - 1
                amp = amp * np.sqrt(digit + 1.0)
            else:
                mask &= digit > 0
                amp = amp * np.sqrt(np.maximum(digit, 0).astype(float))
            current[slot] = digit + step
            target = target + step * layout.strides[slot]
        cols = np.nonzero(mask)[0]
        rows = target[cols]
        vals = coeff * amp[cols]
        self.rows.append(rows)
        self.cols.append(cols)
        self.vals.append(vals.astype(complex))
        if with_adjoint:
            self.rows.append(cols)
            self.cols.append(rows)
            self.vals.append(np.conj(vals).astype(complex))

    def build(self, label: str) -> OperatorMatrix:
        dim = self.layout.total_dim
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0, dtype=complex)
        mat = sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        mat.sum_duplicates()
        return OperatorMatrix.from_matrix(mat, hermitian=True, label=label)


def _site_energies(collector: _TermCollector, group: int, frequency: float, offsets: Optional[Sequence[float]]):
    """−Σ_j ((ω + δ_j)/2) σ_z^j"""
    layout = collector.layout
    size = layout.spin_counts[group]
    if size == 0:
        return
    energies = np.zeros(layout.total_dim)
    for j in range(size):
        slot = layout.spin_slot(group, j)
        omega = frequency + (offsets[j] if offsets is not None else 0.0)
        sigma_z = 1.0 - 2.0 * layout.digits[:, slot]
        energies -= 0.5 * omega * sigma_z
    collector.add_diagonal(energies)


def _hopping(collector: _TermCollector, group_i: int, group_j: int, couplings: np.ndarray, unordered: bool):
    """Σ c_{jk} (σ_+^j σ_-^k + σ_-^j σ_+^k)"""
    layout = collector.layout
    n_i, n_j = couplings.shape
    for a in range(n_i):
        for b in range(n_j):
            if unordered and b <= a:
                continue
            c = couplings[a, b]
            if c == 0:
                continue
            slot_a = layout.spin_slot(group_i, a)
            slot_b = layout.spin_slot(group_j, b)
            collector.add_ladder([(slot_b, -1), (slot_a, +1)], c, with_adjoint=True)


def _bath_terms(collector: _TermCollector, group: int, label: str, bath, basis: str, form: str):
    """環境モードの自由項と結合項"""
    layout = collector.layout
    count = bath.mode_count
    omegas = np.asarray(bath.frequencies, dtype=float)
    couplings = np.asarray(bath.couplings, dtype=float)
    if basis == "collective":
        transform = collective_mode_transform(count).dense().real
        mode_energies = transform @ np.diag(omegas) @ transform.T
        couplings = collective_bath_couplings(couplings)
    else:
        mode_energies = np.diag(omegas)

    slots = [layout.mode_slot(label, q) for q in range(count)]
    diag = np.zeros(layout.total_dim)
    for q, slot in enumerate(slots):
        diag += mode_energies[q, q] * layout.digits[:, slot]
    collector.add_diagonal(diag)
    for q, slot_q in enumerate(slots):
        for qp, slot_qp in enumerate(slots):
            if q != qp and abs(mode_energies[q, qp]) > 1e-15:
                collector.add_ladder([(slot_qp, -1), (slot_q, +1)], mode_energies[q, qp])

    for j in range(layout.spin_counts[group]):
        spin = layout.spin_slot(group, j)
        for q, slot in enumerate(slots):
            g = couplings[j, q]
            if abs(g) < 1e-15:
                continue
            # Γ (b† σ_- + b σ_+)
            collector.add_ladder([(spin, -1), (slot, +1)], g, with_adjoint=True)
            if form == "sigma_x":
                # 反回転項 Γ (b† σ_+ + b σ_-)
                collector.add_ladder([(spin, +1), (slot, +1)], g, with_adjoint=True)


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigurationError(message)


def dicke_hamiltonian(spec: SystemSpec, layout: Optional[SpaceLayout] = None) -> OperatorMatrix:
    """
    H = ω a†a − (ω_A/2) Σσ_z^j + γ Σσ_x^j (a + a†)

    rwa=True の場合、相互作用は γ Σ (σ_+^j a + σ_-^j a†)。
    """
    _require(spec.field_mode is not None, "Dicke Hamiltonian requires field_mode")
    _require(spec.group_b is None, "Dicke Hamiltonian takes a single spin group")
    layout = layout or build_layout(spec)
    collector = _TermCollector(layout)
    _site_energies(collector, 0, spec.group_a.frequency, spec.site_disorder_a)

    field_slot = layout.mode_slot("field", 0)
    collector.add_diagonal(spec.field_mode.frequency * layout.digits[:, field_slot].astype(float))

    gamma = spec.inter_coupling
    for j in range(spec.group_a.sites):
        spin = layout.spin_slot(0, j)
        # σ_+ a + h.c.
        collector.add_ladder([(field_slot, -1), (spin, +1)], gamma, with_adjoint=True)
        if not spec.rwa:
            # σ_+ a† + h.c.
            collector.add_ladder([(field_slot, +1), (spin, +1)], gamma, with_adjoint=True)
    return collector.build("H_dicke")


def _inter_couplings(spec: SystemSpec) -> np.ndarray:
    n, m = spec.group_a.sites, spec.group_b.sites
    couplings = np.full((n, m), spec.inter_coupling, dtype=float)
    if spec.inter_coupling_disorder is not None:
        couplings = couplings + np.asarray(spec.inter_coupling_disorder, dtype=float)
    return couplings


def hopping_hamiltonian(spec: SystemSpec, layout: Optional[SpaceLayout] = None) -> OperatorMatrix:
    """2グループ間の対称ホッピング H = Σ γ_{jk}(σ_+^j σ_-^k + h.c.)（総励起数を保存）"""
    _require(spec.group_b is not None, "hopping Hamiltonian requires group_b")
    layout = layout or build_layout(spec)
    collector = _TermCollector(layout)
    _site_energies(collector, 0, spec.group_a.frequency, spec.site_disorder_a)
    _site_energies(collector, 1, spec.group_b.frequency, spec.site_disorder_b)
    _hopping(collector, 0, 1, _inter_couplings(spec), unordered=False)
    return collector.build("H_hop")


def full_hamiltonian(spec: SystemSpec, layout: Optional[SpaceLayout] = None) -> OperatorMatrix:
    """
    環境付き2リング模型

    B側の環境結合は k 添字（Γ_{kℓ'}）で実装する。グループ内結合は j < j' の
    非順序対で和をとる。環境は spec.bath_basis の基底で構築する。
    """
    _require(spec.group_b is not None, "full Hamiltonian requires group_b")
    layout = layout or build_layout(spec)
    if spec.field_mode is not None:
        logger.warning("field_mode is not part of the two-ring Hamiltonian; it stays decoupled")
    collector = _TermCollector(layout)
    _site_energies(collector, 0, spec.group_a.frequency, spec.site_disorder_a)
    _site_energies(collector, 1, spec.group_b.frequency, spec.site_disorder_b)
    for group, label, bath in ((0, "bath_a", spec.bath_a), (1, "bath_b", spec.bath_b)):
        if bath is not None and bath.mode_count > 0:
            _bath_terms(collector, group, label, bath, spec.bath_basis, spec.bath_coupling_form)
    _hopping(collector, 0, 1, _inter_couplings(spec), unordered=False)
    if spec.intra_couplings_a is not None:
        _hopping(collector, 0, 0, np.asarray(spec.intra_couplings_a, dtype=float), unordered=True)
    if spec.intra_couplings_b is not None:
        _hopping(collector, 1, 1, np.asarray(spec.intra_couplings_b, dtype=float), unordered=True)
    return collector.build("H_full")


def collective_bath_couplings(couplings) -> np.ndarray:
    """Γ_{jℓ} を集団モード基底へ: Γ̃_{jq} = Σ_ℓ Γ_{jℓ} O_{qℓ}"""
    couplings = np.asarray(couplings, dtype=float)
    transform = collective_mode_transform(couplings.shape[1]).dense().real
    return couplings @ transform.T


def uniform_bath_couplings(n_sites: int, n_modes: int, strength: float) -> List[List[float]]:
    """全サイトが全モードに Γ/√L で結合（対称モードのみが結合する）"""
    return np.full((n_sites, n_modes), strength / np.sqrt(n_modes)).tolist()


def local_bath_couplings(n_sites: int, strength: float) -> List[List[float]]:
    """各サイトが自分の局所モードにのみ Γ で結合（L = N）。W状態と対称モードの結合は Γ のまま（√N 増強なし）"""
    return (strength * np.eye(n_sites)).tolist()


def ring_couplings(n_sites: int, g: float, topology: str = "complete") -> List[List[float]]:
    """
    グループ内結合行列

    complete: 全対に g
    ring: 最近接（周期境界）に g。g < 0 なら W状態が1励起セクターの基底状態
    """
    matrix = np.zeros((n_sites, n_sites))
    if topology == "complete":
        matrix[:] = g
        np.fill_diagonal(matrix, 0.0)
    elif topology == "ring":
        for j in range(n_sites):
            k = (j + 1) % n_sites
            if k != j:
                matrix[j, k] = matrix[k, j] = g
    else:
        raise ConfigurationError(f"unknown topology {topology!r}")
    return matrix.tolist()


def draw_site_offsets(rng_seed: int, count: int, width: float) -> np.ndarray:
    """[−δ, +δ] の一様乱数オフセット（シード固定で再現）"""
    if width < 0:
        raise DomainError(f"disorder width must be >= 0, got {width}")
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(-width, width, size=count)


def apply_site_disorder(spec: SystemSpec, width: float) -> SystemSpec:
    """対角（サイト周波数）乱れを付与した新しい spec を返す"""
    if width < 0:
        raise DomainError(f"disorder width must be >= 0, got {width}")
    if width == 0:
        return spec
    n = spec.group_a.sites
    m = spec.group_b.sites if spec.group_b else 0
    offsets = draw_site_offsets(spec.rng_seed, n + m, width)
    update = {"site_disorder_a": offsets[:n].tolist()}
    if spec.group_b is not None:
        update["site_disorder_b"] = offsets[n:].tolist()
    logger.debug("site disorder width=%g seed=%d", width, spec.rng_seed)
    return SystemSpec.model_validate({**spec.model_dump(), **update})


def apply_coupling_disorder(spec: SystemSpec, width: float) -> SystemSpec:
    """非対角（グループ間結合 γ_{jk}）乱れを付与した新しい spec を返す"""
    if width < 0:
        raise DomainError(f"disorder width must be >= 0, got {width}")
    _require(spec.group_b is not None, "coupling disorder requires group_b")
    if width == 0:
        return spec
    rng = np.random.default_rng([spec.rng_seed, 1])
    offsets = rng.uniform(-width, width, size=(spec.group_a.sites, spec.group_b.sites))
    return SystemSpec.model_validate({**spec.model_dump(), "inter_coupling_disorder": offsets.tolist()})


def model_hamiltonian(spec: SystemSpec, layout: Optional[SpaceLayout] = None) -> OperatorMatrix:
    """spec の内容に応じて Dicke 模型（場モードのみ）か2リング模型を選ぶ"""
    if spec.group_b is None:
        return dicke_hamiltonian(spec, layout)
    return full_hamiltonian(spec, layout)
