import os

import pytest

from core.hamiltonians import ring_couplings, uniform_bath_couplings
from core.models import BathSpec, FieldMode, SpinGroup, SystemSpec

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture
def repo_root(monkeypatch):
    """プリセットの相対パスが解決できるようにリポジトリ直下で実行する"""
    monkeypatch.chdir(REPO_ROOT)
    return REPO_ROOT


@pytest.fixture
def dicke_spec():
    def _make(N: int, gamma: float = 0.05, cutoff: int = 3, rwa: bool = False) -> SystemSpec:
        return SystemSpec(group_a=SpinGroup(sites=N), field_mode=FieldMode(cutoff=cutoff),
                          inter_coupling=gamma, rwa=rwa)
    return _make


@pytest.fixture
def hopping_spec():
    def _make(N: int, M: int, gamma: float = 1.0, omega_a: float = 1.0, omega_b: float = 1.0) -> SystemSpec:
        return SystemSpec(group_a=SpinGroup(sites=N, frequency=omega_a),
                          group_b=SpinGroup(sites=M, frequency=omega_b), inter_coupling=gamma)
    return _make


@pytest.fixture
def ring_spec():
    """均一な環境結合を持つ2リング模型（N=M=2、各2モード、d=3）"""
    def _make(bath_basis: str = "collective", couplings=None, intra: float = 0.05) -> SystemSpec:
        couplings = couplings if couplings is not None else uniform_bath_couplings(2, 2, 0.1)
        bath = BathSpec(frequencies=[1.0, 1.0], couplings=couplings, cutoff=3)
        return SystemSpec(
            group_a=SpinGroup(sites=2),
            group_b=SpinGroup(sites=2),
            inter_coupling=0.1,
            intra_couplings_a=ring_couplings(2, intra),
            intra_couplings_b=ring_couplings(2, intra),
            bath_a=bath,
            bath_b=bath,
            bath_basis=bath_basis,
        )
    return _make
