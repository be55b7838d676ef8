"""
スピン⊗ボゾン複合ヒルベルト空間の構築

基底順序（固定・ドキュメント化済み）:
    グループAのスピン（サイト0が最下位桁）→ グループBのスピン → ボゾンモード（宣言順）
各スロットの桁は、スピンなら 0=基底(|↑⟩) / 1=励起(|↓⟩)、モードなら占有数。
インデックスは混合基数のリトルエンディアン表現: index = Σ digit_s * stride_s
"""
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, product
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
from scipy.special import comb

from config.settings import APP_CONFIG, NUMERICS_CONFIG
from .exceptions import CapacityError, ConfigurationError, DomainError

logger = logging.getLogger(__name__)

GroupRef = Union[int, str]

# 単一スピンの演算子（基底 |0⟩=基底状態, |1⟩=励起状態）
SIGMA_Z = sparse.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex))
SIGMA_RAISE = sparse.csr_matrix(np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex))  # |0⟩→|1⟩
SIGMA_LOWER = sparse.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex))  # |1⟩→|0⟩
SIGMA_X = SIGMA_RAISE + SIGMA_LOWER
EXCITED = sparse.csr_matrix(np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex))


def annihilation(cutoff: int) -> sparse.csr_matrix:
    """カットオフ d のボゾン消滅演算子 a"""
    return sparse.diags(np.sqrt(np.arange(1, cutoff, dtype=float)), 1, format="csr", dtype=complex)


def number(cutoff: int) -> sparse.csr_matrix:
    return sparse.diags(np.arange(cutoff, dtype=float), 0, format="csr", dtype=complex)


@dataclass(frozen=True)
class SpaceLayout:
    """
    複合空間のレイアウト

    spin_counts: グループごとのサイト数（A, B の順）
    boson_modes: モードグループごとの (モード数 L, カットオフ d)
    mode_labels: モードグループのラベル（"field", "bath_a", "bath_b" など）
    """
    spin_counts: Tuple[int, ...]
    boson_modes: Tuple[Tuple[int, int], ...] = ()
    mode_labels: Tuple[str, ...] = ()

    @cached_property
    def radices(self) -> Tuple[int, ...]:
        spins = [2] * sum(self.spin_counts)
        modes = [cutoff for count, cutoff in self.boson_modes for _ in range(count)]
        return tuple(spins + modes)

    @cached_property
    def strides(self) -> Tuple[int, ...]:
        strides = []
        acc = 1
        for radix in self.radices:
            strides.append(acc)
            acc *= radix
        return tuple(strides)

    @property
    def total_dim(self) -> int:
        return math.prod(self.radices)

    @property
    def n_slots(self) -> int:
        return len(self.radices)

    def group_index(self, group: GroupRef) -> int:
        if isinstance(group, str):
            group = {"A": 0, "B": 1}.get(group.upper(), -1)
        if not 0 <= group < len(self.spin_counts):
            raise DomainError(f"spin group {group!r} does not exist in layout {self.spin_counts}")
        return group

    def spin_slot(self, group: GroupRef, site: int) -> int:
        g = self.group_index(group)
        if not 0 <= site < self.spin_counts[g]:
            raise DomainError(f"site {site} outside group of size {self.spin_counts[g]}")
        return sum(self.spin_counts[:g]) + site

    def mode_group_index(self, label: Union[int, str]) -> int:
        if isinstance(label, str):
            if label not in self.mode_labels:
                raise DomainError(f"mode group {label!r} not in layout {self.mode_labels}")
            return self.mode_labels.index(label)
        if not 0 <= label < len(self.boson_modes):
            raise DomainError(f"mode group {label} does not exist")
        return label

    def mode_slot(self, label: Union[int, str], mode: int) -> int:
        k = self.mode_group_index(label)
        count = self.boson_modes[k][0]
        if not 0 <= mode < count:
            raise DomainError(f"mode {mode} outside group of {count} modes")
        return sum(self.spin_counts) + sum(c for c, _ in self.boson_modes[:k]) + mode

    def mode_slots(self) -> List[int]:
        first = sum(self.spin_counts)
        return list(range(first, self.n_slots))

    def encode(self, config: Sequence[int]) -> int:
        if len(config) != self.n_slots:
            raise DomainError(f"configuration has {len(config)} digits, layout has {self.n_slots} slots")
        index = 0
        for digit, radix, stride in zip(config, self.radices, self.strides):
            if not 0 <= digit < radix:
                raise DomainError(f"digit {digit} outside radix {radix}")
            index += int(digit) * stride
        return index

    def decode(self, index: int) -> Tuple[int, ...]:
        if not 0 <= index < self.total_dim:
            raise DomainError(f"basis index {index} outside [0, {self.total_dim})")
        digits = []
        for radix in self.radices:
            index, digit = divmod(index, radix)
            digits.append(digit)
        return tuple(digits)

    @cached_property
    def digits(self) -> np.ndarray:
        """全基底インデックスの桁表（total_dim × n_slots）"""
        indices = np.arange(self.total_dim, dtype=np.int64)
        table = np.empty((self.total_dim, self.n_slots), dtype=np.int16)
        for slot, (radix, stride) in enumerate(zip(self.radices, self.strides)):
            table[:, slot] = (indices // stride) % radix
        return table

    def descriptor(self) -> Dict[str, Any]:
        return {
            "spin_counts": list(self.spin_counts),
            "boson_modes": [list(m) for m in self.boson_modes],
            "mode_labels": list(self.mode_labels),
            "total_dim": self.total_dim,
            "ordering": "little-endian: group A spins, group B spins, modes in declaration order",
        }


def make_layout(spin_counts: Sequence[int], boson_modes: Sequence[Tuple[int, int]] = (),
                mode_labels: Optional[Sequence[str]] = None,
                max_dimension: Optional[int] = None) -> SpaceLayout:
    """サイト数とモード定義からレイアウトを作成（検証付き）"""
    for size in spin_counts:
        if size < 0:
            raise ConfigurationError(f"group size must be >= 0, got {size}")
    for count, cutoff in boson_modes:
        if count < 0:
            raise ConfigurationError(f"mode count must be >= 0, got {count}")
        if count > 0 and cutoff < 2:
            raise ConfigurationError(f"boson cutoff must be >= 2, got {cutoff}")
    labels = tuple(mode_labels) if mode_labels is not None else tuple(f"modes_{i}" for i in range(len(boson_modes)))
    if len(labels) != len(boson_modes):
        raise ConfigurationError("mode_labels and boson_modes differ in length")

    budget = max_dimension if max_dimension is not None else NUMERICS_CONFIG["max_dimension"]
    dim = 2 ** sum(spin_counts)
    for count, cutoff in boson_modes:
        dim *= cutoff ** count
    if dim > budget:
        raise CapacityError(dim, budget)

    return SpaceLayout(tuple(int(s) for s in spin_counts),
                       tuple((int(c), int(d)) for c, d in boson_modes), labels)


def build_layout(spec, max_dimension: Optional[int] = None) -> SpaceLayout:
    """
    SystemSpec からレイアウトを構築

    モードの宣言順: field → bath_a → bath_b（存在するもののみ）
    """
    spin_counts = [spec.group_a.sites]
    if spec.group_b is not None:
        spin_counts.append(spec.group_b.sites)

    modes: List[Tuple[int, int]] = []
    labels: List[str] = []
    if spec.field_mode is not None:
        modes.append((1, spec.field_mode.cutoff))
        labels.append("field")
    if spec.bath_a is not None and spec.bath_a.mode_count > 0:
        modes.append((spec.bath_a.mode_count, spec.bath_a.cutoff))
        labels.append("bath_a")
    if spec.bath_b is not None and spec.bath_b.mode_count > 0:
        modes.append((spec.bath_b.mode_count, spec.bath_b.cutoff))
        labels.append("bath_b")

    layout = make_layout(spin_counts, modes, labels, max_dimension)
    logger.debug("layout built: %s", layout.descriptor())
    return layout


@dataclass(frozen=True)
class StateVector:
    """複素振幅ベクトル（構築後は読み取り専用）"""
    amplitudes: np.ndarray
    layout: SpaceLayout

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.layout.total_dim:
            raise DomainError(f"amplitude length {amps.size} != layout dimension {self.layout.total_dim}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "StateVector") -> complex:
        """⟨self|other⟩"""
        if other.dim != self.dim:
            raise DomainError("state dimensions differ")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": APP_CONFIG["schema_version"],
            "kind": "state",
            "dimension": self.dim,
            "layout": self.layout.descriptor(),
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "StateVector":
        desc = data["layout"]
        layout = make_layout(desc["spin_counts"], [tuple(m) for m in desc["boson_modes"]], desc["mode_labels"])
        amps = np.array([complex(re, im) for re, im in data["amplitudes"]])
        return cls(amps, layout)


@dataclass(frozen=True)
class OperatorMatrix:
    """
    疎な複素行列

    hermitian フラグは from_matrix で実測して設定する（max|H−H†| < hermitian_tol）
    """
    entries: sparse.csr_matrix
    dim: int
    hermitian: bool = False
    label: str = field(default="", compare=False)

    @classmethod
    def from_matrix(cls, matrix, hermitian: Optional[bool] = None, label: str = "",
                    tol: Optional[float] = None) -> "OperatorMatrix":
        mat = sparse.csr_matrix(matrix, dtype=complex)
        mat.eliminate_zeros()
        if mat.shape[0] != mat.shape[1]:
            raise DomainError(f"operator must be square, got {mat.shape}")
        tol = NUMERICS_CONFIG["hermitian_tol"] if tol is None else tol
        measured = hermitian_error(mat) < tol
        if hermitian and not measured:
            raise DomainError(f"operator {label!r} flagged Hermitian but max|H-H†| = {hermitian_error(mat):.3e}")
        flag = measured if hermitian is None else bool(hermitian)
        return cls(mat, mat.shape[0], flag, label)

    def dense(self) -> np.ndarray:
        return self.entries.toarray()

    def apply(self, state: Union[StateVector, np.ndarray]) -> np.ndarray:
        vec = state.amplitudes if isinstance(state, StateVector) else state
        if vec.shape[0] != self.dim:
            raise DomainError(f"operator dimension {self.dim} != state dimension {vec.shape[0]}")
        return self.entries @ vec

    def max_hermitian_error(self) -> float:
        return hermitian_error(self.entries)

    def to_json_dict(self) -> Dict[str, Any]:
        coo = self.entries.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return {
            "schema_version": APP_CONFIG["schema_version"],
            "kind": "operator",
            "label": self.label,
            "dimension": self.dim,
            "hermitian": self.hermitian,
            "triplets": [[int(coo.row[i]), int(coo.col[i]), float(coo.data[i].real), float(coo.data[i].imag)]
                         for i in order],
        }

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "OperatorMatrix":
        dim = int(data["dimension"])
        triplets = data["triplets"]
        rows = [t[0] for t in triplets]
        cols = [t[1] for t in triplets]
        vals = [complex(t[2], t[3]) for t in triplets]
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        return cls(mat, dim, bool(data.get("hermitian", False)), data.get("label", ""))


def hermitian_error(matrix) -> float:
    diff = (matrix - matrix.conj().T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


def identity(dim: int) -> sparse.csr_matrix:
    return sparse.identity(dim, dtype=complex, format="csr")


def embed_local(layout: SpaceLayout, first_slot: int, n_slots: int, local) -> sparse.csr_matrix:
    """連続スロット [first_slot, first_slot+n_slots) に作用する局所演算子を全空間へ埋め込む"""
    low = layout.strides[first_slot]
    block = math.prod(layout.radices[first_slot:first_slot + n_slots])
    high = layout.total_dim // (low * block)
    local = sparse.csr_matrix(local, dtype=complex)
    if local.shape != (block, block):
        raise DomainError(f"local operator shape {local.shape} != ({block}, {block})")
    return sparse.kron(identity(high), sparse.kron(local, identity(low), format="csr"), format="csr")


def site_operator(layout: SpaceLayout, slot: int, local) -> sparse.csr_matrix:
    return embed_local(layout, slot, 1, local)


def _group_offset(layout: SpaceLayout, group: GroupRef) -> Tuple[int, int]:
    g = layout.group_index(group)
    return layout.spin_slot(g, 0) if layout.spin_counts[g] else sum(layout.spin_counts[:g]), layout.spin_counts[g]


def _dicke_indices(n_sites: int, n: int, strides: Sequence[int]) -> np.ndarray:
    return np.array([sum(strides[s] for s in subset) for subset in combinations(range(n_sites), n)],
                    dtype=np.int64)


def dicke_state(layout: SpaceLayout, group: GroupRef, n: int) -> StateVector:
    """
    完全対称化された n 励起状態 |n⟩

    C(N,n) 個の配置の等振幅重ね合わせ（各振幅 1/√C(N,n)）。
    他のグループ・モードは基底状態／真空。
    """
    first, size = _group_offset(layout, group)
    if not 0 <= n <= size:
        raise DomainError(f"excitation number {n} outside [0, {size}]")
    strides = layout.strides[first:first + size]
    indices = _dicke_indices(size, n, strides)
    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[indices] = 1.0 / math.sqrt(comb(size, n, exact=True))
    return StateVector(amps, layout)


def singlet_state(layout: SpaceLayout, group: GroupRef, sites: Tuple[int, int]) -> StateVector:
    """2サイト反対称一重項 (|1_j 0_j'⟩ − |0_j 1_j'⟩)/√2"""
    j, jp = sites
    if j == jp:
        raise DomainError("singlet needs two distinct sites")
    slot_j = layout.spin_slot(group, j)
    slot_jp = layout.spin_slot(group, jp)
    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[layout.strides[slot_j]] = 1.0 / math.sqrt(2.0)
    amps[layout.strides[slot_jp]] = -1.0 / math.sqrt(2.0)
    return StateVector(amps, layout)


def basis_state(layout: SpaceLayout, config: Sequence[int]) -> StateVector:
    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[layout.encode(config)] = 1.0
    return StateVector(amps, layout)


def vacuum_state(layout: SpaceLayout) -> StateVector:
    return basis_state(layout, [0] * layout.n_slots)


def product_state(layout: SpaceLayout, group: GroupRef, excited_sites: Iterable[int]) -> StateVector:
    config = [0] * layout.n_slots
    for site in excited_sites:
        config[layout.spin_slot(group, site)] = 1
    return basis_state(layout, config)


def with_mode_excitation(state: StateVector, label: Union[int, str], mode: int, quanta: int = 1) -> StateVector:
    """状態の全成分でモード (label, mode) を quanta 個励起（真空成分のみを想定）"""
    layout = state.layout
    slot = layout.mode_slot(label, mode)
    if quanta >= layout.radices[slot]:
        raise DomainError(f"{quanta} quanta exceed cutoff {layout.radices[slot]}")
    occupied = layout.digits[:, slot] != 0
    if np.any(np.abs(state.amplitudes[occupied]) > 0):
        raise DomainError("mode is not in vacuum in the given state")
    amps = np.zeros(layout.total_dim, dtype=complex)
    amps[np.nonzero(~occupied)[0] + quanta * layout.strides[slot]] = state.amplitudes[~occupied]
    return StateVector(amps, layout)


def superpose(states: Sequence[StateVector], weights: Optional[Sequence[complex]] = None) -> StateVector:
    """重ね合わせを作り規格化する"""
    if not states:
        raise DomainError("no states to superpose")
    weights = weights if weights is not None else [1.0] * len(states)
    amps = sum(w * s.amplitudes for w, s in zip(weights, states))
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise DomainError("superposition vanishes")
    return StateVector(amps / norm, states[0].layout)


def symmetric_projector(layout: SpaceLayout, group: GroupRef) -> OperatorMatrix:
    """グループの完全対称部分空間への直交射影（ランク N+1）"""
    first, size = _group_offset(layout, group)
    local_strides = [2 ** s for s in range(size)]
    rows, cols, vals = [], [], []
    for n in range(size + 1):
        idx = _dicke_indices(size, n, local_strides)
        weight = 1.0 / comb(size, n, exact=True)
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.full(r.size, weight))
    local = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(2 ** size, 2 ** size), dtype=complex)
    if size == 0:
        return OperatorMatrix(identity(layout.total_dim), layout.total_dim, True, "P_sym")
    full = embed_local(layout, first, size, local)
    return OperatorMatrix(full, layout.total_dim, True, f"P_sym[{group}]")


def collective_mode_transform(mode_count: int) -> OperatorMatrix:
    """
    対称集団モードを先頭行に持つ直交行列 O（L×L, 実）

    残りの行は標準基底 e_0, e_1, ... を順に Gram–Schmidt で直交化して作る。
    一次従属になったベクトルは捨てる（最後の e_{L-1} が該当）。
    """
    if mode_count < 1:
        raise DomainError(f"mode count must be >= 1, got {mode_count}")
    rows = [np.full(mode_count, 1.0 / math.sqrt(mode_count))]
    for k in range(mode_count):
        if len(rows) == mode_count:
            break
        v = np.zeros(mode_count)
        v[k] = 1.0
        for r in rows:
            v -= np.dot(r, v) * r
        # 再直交化
        for r in rows:
            v -= np.dot(r, v) * r
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            rows.append(v / norm)
    matrix = np.vstack(rows)
    return OperatorMatrix(sparse.csr_matrix(matrix, dtype=complex), mode_count, False, f"O[{mode_count}]")


def excitation_number_operator(layout: SpaceLayout) -> OperatorMatrix:
    """スピン励起数 + ボゾン占有数（対角）"""
    total = layout.digits.sum(axis=1).astype(float)
    return OperatorMatrix(sparse.diags(total, 0, format="csr", dtype=complex), layout.total_dim, True, "N_exc")


def site_permutation_operator(layout: SpaceLayout, group: GroupRef, i: int, j: int) -> OperatorMatrix:
    """グループ内のサイト i, j を入れ替える置換演算子"""
    si, sj = layout.spin_slot(group, i), layout.spin_slot(group, j)
    d = layout.digits
    old = np.arange(layout.total_dim, dtype=np.int64)
    di = d[:, si].astype(np.int64)
    dj = d[:, sj].astype(np.int64)
    new = old + (dj - di) * layout.strides[si] + (di - dj) * layout.strides[sj]
    mat = sparse.csr_matrix((np.ones(layout.total_dim), (new, old)), shape=(layout.total_dim,) * 2, dtype=complex)
    return OperatorMatrix(mat, layout.total_dim, True, f"T[{group}:{i}<->{j}]")


def _multinomial_symmetric_states(mode_count: int, cutoff: int) -> np.ndarray:
    """(b_0†)^k|0⟩/√k!（k < d）を局所Fock基底で表した行ベクトル群"""
    dim = cutoff ** mode_count
    states = np.zeros((cutoff, dim))
    for occupations in product(range(cutoff), repeat=mode_count):
        k = sum(occupations)
        if k >= cutoff:
            continue
        index = sum(n * cutoff ** l for l, n in enumerate(occupations))
        log_coeff = 0.5 * (math.lgamma(k + 1) - sum(math.lgamma(n + 1) for n in occupations)) \
            - 0.5 * k * math.log(mode_count)
        states[k, index] = math.exp(log_coeff)
    return states


def symmetric_bath_projector(layout: SpaceLayout, label: Union[int, str], basis: str = "collective") -> OperatorMatrix:
    """
    モードグループの対称ボゾン部分空間への射影

    collective: 集団モード基底（先頭モードが対称モード）で、非対称モードが真空の状態
    local: 局所モード基底での (b_0†)^k|0⟩/√k!, k = 0..d-1 の張る空間
    いずれもランク d。
    """
    k = layout.mode_group_index(label)
    count, cutoff = layout.boson_modes[k]
    if count == 0:
        return OperatorMatrix(identity(layout.total_dim), layout.total_dim, True, "P_bath")
    first = layout.mode_slot(k, 0)
    if basis == "collective":
        mask = np.ones(layout.total_dim, dtype=bool)
        for q in range(1, count):
            mask &= layout.digits[:, first + q] == 0
        mat = sparse.diags(mask.astype(float), 0, format="csr", dtype=complex)
        return OperatorMatrix(mat, layout.total_dim, True, f"P_bath[{label}]")
    if basis == "local":
        vecs = _multinomial_symmetric_states(count, cutoff)
        local = sparse.csr_matrix(vecs.T @ vecs, dtype=complex)
        return OperatorMatrix(embed_local(layout, first, count, local), layout.total_dim, True, f"P_bath[{label}]")
    raise ConfigurationError(f"unknown bath basis {basis!r}")


def top_fock_mask(layout: SpaceLayout) -> np.ndarray:
    """いずれかのモードが最上位準位 d-1 にある基底インデックス"""
    mask = np.zeros(layout.total_dim, dtype=bool)
    for slot in layout.mode_slots():
        mask |= layout.digits[:, slot] == layout.radices[slot] - 1
    return mask


def dicke_product_state(layout: SpaceLayout, counts: Dict[GroupRef, int]) -> StateVector:
    """各グループの Dicke 状態の直積 |n_A⟩⊗|n_B⟩（指定のないグループは基底状態）"""
    indices = np.zeros(1, dtype=np.int64)
    amps = np.ones(1)
    for group, n in counts.items():
        first, size = _group_offset(layout, group)
        if not 0 <= n <= size:
            raise DomainError(f"excitation number {n} outside [0, {size}] for group {group!r}")
        idx = _dicke_indices(size, n, layout.strides[first:first + size])
        indices = (indices[:, None] + idx[None, :]).ravel()
        amps = np.outer(amps, np.full(idx.size, 1.0 / math.sqrt(idx.size))).ravel()
    vec = np.zeros(layout.total_dim, dtype=complex)
    vec[indices] = amps
    return StateVector(vec, layout)


def excitation_counts(layout: SpaceLayout, group: GroupRef) -> np.ndarray:
    """基底インデックスごとのグループ内励起数"""
    first, size = _group_offset(layout, group)
    return layout.digits[:, first:first + size].sum(axis=1).astype(np.int64)


def mode_quanta(layout: SpaceLayout, label: Union[int, str]) -> np.ndarray:
    """基底インデックスごとのモードグループ内総量子数"""
    k = layout.mode_group_index(label)
    count = layout.boson_modes[k][0]
    if count == 0:
        return np.zeros(layout.total_dim, dtype=np.int64)
    first = layout.mode_slot(k, 0)
    return layout.digits[:, first:first + count].sum(axis=1).astype(np.int64)
