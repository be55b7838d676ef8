import math

import numpy as np
import pytest
import scipy.sparse as sparse

from core.exceptions import DegenerateFitError, DomainError
from core.hamiltonians import hopping_hamiltonian, local_bath_couplings, dicke_hamiltonian
from core.hilbert import build_layout, dicke_product_state, singlet_state
from core.sectors import (FORMULAS, cooperative_projector, dark_states, decompose, decompose_spec,
                          emission_amplitude, expected_cooperative_rank, golden_rule_rates, leakage_vs_disorder,
                          spectral_norm, supertransfer_components, supertransfer_rate, symmetric_channel_amplitude,
                          verify_scaling)


def test_emission_amplitude_closed_form():
    assert emission_amplitude(1, 1, 0.2) == pytest.approx(0.2)
    assert emission_amplitude(4, 2, 1.0) ** 2 == pytest.approx(2 * 3)
    assert emission_amplitude(4, 2, 1.0, m_from=3) ** 2 == pytest.approx(2 * 3 * 4)
    with pytest.raises(DomainError):
        emission_amplitude(3, 4, 1.0)


def test_supertransfer_rate_single_excitation_goes_as_nm():
    assert supertransfer_rate(1, 3, 0, 2, 0.5) == pytest.approx(6 * 0.25)
    forward, backward = supertransfer_components(2, 4, 1, 3, 1.0)
    assert forward == pytest.approx(2 * 3 * 2 * 2)
    assert backward == pytest.approx(3 * 2 * 1 * 3)
    # 全励起が B 側にある場合は逆向きのみ
    assert supertransfer_rate(0, 2, 2, 2, 1.0) < 0
    with pytest.raises(DomainError):
        supertransfer_components(3, 2, 0, 1, 1.0)


def test_verify_decay_matches_matrix_elements_and_is_linear_in_n():
    grid = [{"N": N, "n": n} for N in range(1, 9) for n in range(1, N + 1)]
    report = verify_scaling("decay", grid, gamma=0.05)
    assert report.max_abs_error < 1e-10
    assert report.fitted_exponent == pytest.approx(1.0, abs=1e-9)
    assert report.fit_residual < 1e-9
    first = report.samples[0]
    assert first.measured == pytest.approx(0.05 ** 2)


def test_verify_hopping_element_scales_as_nm():
    grid = [{"N": N, "M": M} for N in range(1, 6) for M in range(1, 6)]
    report = verify_scaling("hopping_element", grid, gamma=1.0)
    frame = report.to_frame()
    assert np.allclose(frame["measured"] / frame["predicted"], 1.0, atol=1e-6)
    assert report.fitted_exponent == pytest.approx(1.0, abs=1e-9)
    row = frame[(frame["N"] == 3) & (frame["M"] == 2)].iloc[0]
    assert row["measured"] == pytest.approx(6.0)


def test_verify_net_transfer_golden_rule_over_all_occupations():
    grid = [{"N": N, "M": M, "n": n, "m": m}
            for N in range(1, 4) for M in range(1, 4) for n in range(N + 1) for m in range(M + 1)]
    report = verify_scaling("net_transfer", grid, gamma=0.7)
    assert report.max_abs_error < 1e-10


def test_net_transfer_cubic_growth_exponent_is_reported():
    grid = [{"N": N, "M": 1, "filling": 0.5} for N in (2, 3, 4, 5, 6)]
    report = verify_scaling("net_transfer_cubic", grid, gamma=1.0)
    assert report.max_abs_error < 1e-10
    assert 1.0 < report.fitted_exponent <= 2.2
    assert report.notes


def test_verify_scaling_refuses_degenerate_grid():
    with pytest.raises(DegenerateFitError):
        verify_scaling("decay", [{"N": 3, "n": 1}] * 4)
    with pytest.raises(DomainError):
        verify_scaling("cooling", [{"N": 1}])
    with pytest.raises(DomainError):
        verify_scaling("net_transfer", [{"N": 2, "n": 1}])
    with pytest.raises(DomainError):
        verify_scaling("decay", [])
    assert "decay" in FORMULAS


def test_golden_rule_sum_equals_symmetric_element(hopping_spec):
    spec = hopping_spec(3, 2, gamma=1.0)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    initial = dicke_product_state(layout, {0: 2, 1: 1})
    rate = golden_rule_rates(h, initial, layout, {0: 1, 1: 2})
    forward, _ = supertransfer_components(2, 3, 1, 2, 1.0)
    assert rate == pytest.approx(forward, abs=1e-12)


def test_homogeneous_instance_has_no_leakage(ring_spec):
    spec = ring_spec()
    decomposition = decompose_spec(spec)
    assert decomposition.reconstruction_error < 1e-12
    assert decomposition.leakage_frobenius < 1e-12
    assert decomposition.leakage_spectral < 1e-12
    assert decomposition.rank == expected_cooperative_rank(spec) == 9 * 3 * 3
    summary = decomposition.to_summary(expected_rank=81)
    assert summary.dimension == 16 * 81


def test_local_bath_basis_projector_has_same_rank(ring_spec):
    decomposition = decompose_spec(ring_spec(bath_basis="local"))
    assert decomposition.rank == 81
    assert decomposition.reconstruction_error < 1e-12


def test_site_local_bath_couplings_leak_out_of_cooperative_sector(ring_spec):
    spec = ring_spec(couplings=local_bath_couplings(2, 0.1))
    decomposition = decompose_spec(spec)
    assert decomposition.leakage_frobenius > 1e-3


def test_leakage_grows_linearly_with_disorder(ring_spec):
    frame, slope, r2 = leakage_vs_disorder(ring_spec(), [0.001, 0.002, 0.004, 0.008])
    assert list(frame.columns) == ["disorder_width", "leakage_frobenius", "leakage_spectral", "leakage_ratio"]
    assert frame["leakage_frobenius"].is_monotonic_increasing
    assert slope > 0
    assert r2 > 0.99


def test_decompose_parts_sum_to_hamiltonian(hopping_spec):
    spec = hopping_spec(2, 2, gamma=0.3)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    decomposition = decompose(h, cooperative_projector(layout, spec))
    total = decomposition.h_c.entries + decomposition.h_n.entries + decomposition.h_cn.entries
    assert np.max(np.abs((total - h.entries).toarray())) < 1e-14


def test_spectral_norm_matches_dense_two_norm():
    rng = np.random.default_rng(3)
    noise = rng.standard_normal((12, 12))
    a = np.diag(np.arange(1.0, 13.0)) + 0.01 * (noise + noise.T)
    assert spectral_norm(sparse.csr_matrix(a)) == pytest.approx(np.linalg.norm(a, 2), rel=1e-6)
    assert spectral_norm(sparse.csr_matrix((4, 4))) == 0.0


def test_dark_states_do_not_emit_into_symmetric_channel(dicke_spec):
    spec = dicke_spec(3, gamma=0.2, cutoff=2)
    layout = build_layout(spec)
    h = dicke_hamiltonian(spec, layout)
    states = dark_states(layout, 0, 1)
    assert len(states) == 2
    for state in states:
        assert abs(symmetric_channel_amplitude(h, state, 0, 0)) < 1e-12
    singlet = singlet_state(layout, 0, (0, 1))
    assert abs(symmetric_channel_amplitude(h, singlet, 0, 0)) < 1e-12


@pytest.mark.parametrize("N,n", [(N, n) for N in range(2, 5) for n in range(1, N + 1)])
def test_dark_state_count_and_silence_per_sector(dicke_spec, N, n):
    spec = dicke_spec(N, gamma=0.2, cutoff=2)
    layout = build_layout(spec)
    h = dicke_hamiltonian(spec, layout)
    states = dark_states(layout, 0, n)
    assert len(states) == math.comb(N, n) - 1
    if states:
        overlaps = np.array([[np.vdot(a.amplitudes, b.amplitudes) for b in states] for a in states])
        assert np.allclose(overlaps, np.eye(len(states)), atol=1e-12)
    for state in states:
        assert abs(symmetric_channel_amplitude(h, state, 0, n - 1)) < 1e-12
