import math

import numpy as np
import pytest

from core.dynamics import (bures_angle, coherence_decay_rate, density_matrix, dephasing_evolve,
                           dephasing_rate_matrix, evolve, fit_short_time_rate, measure_decoherence_scaling,
                           measure_product_state_dephasing, rabi_frequency, short_time_rate, zero_hamiltonian)
from core.exceptions import CapacityError, DegenerateFitError, DomainError, RegimeViolationError, TruncationError
from core.hamiltonians import dicke_hamiltonian, hopping_hamiltonian
from core.hilbert import (build_layout, dicke_product_state, dicke_state, make_layout, product_state, superpose,
                          with_mode_excitation)
from core.models import DephasingModel


def test_two_site_exchange_follows_analytic_rabi(hopping_spec):
    gamma = 0.4
    spec = hopping_spec(1, 1, gamma=gamma)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    a = dicke_product_state(layout, {0: 1, 1: 0})
    b = dicke_product_state(layout, {0: 0, 1: 1})
    times = np.linspace(0.0, 5.0, 26)
    result = evolve(h, a, times, track={"b": b})
    assert np.allclose(result.observables["b"], np.sin(gamma * times) ** 2, atol=1e-10)
    assert result.norm_drift < 1e-10
    assert result.valid
    frame = result.to_frame()
    assert list(frame.columns)[:2] == ["time", "b"]


def test_evolve_rejects_non_increasing_grid(hopping_spec):
    spec = hopping_spec(1, 1)
    layout = build_layout(spec)
    with pytest.raises(DomainError):
        evolve(hopping_hamiltonian(spec, layout), dicke_state(layout, 0, 1), [0.0, 0.2, 0.1])


def test_top_fock_population_invalidates_run(dicke_spec):
    spec = dicke_spec(1, gamma=0.05, cutoff=2, rwa=True)
    layout = build_layout(spec)
    result = evolve(dicke_hamiltonian(spec, layout), dicke_state(layout, 0, 1), [0.0, math.pi / 0.1])
    assert not result.valid
    assert result.truncation_leak > 0.9
    with pytest.raises(TruncationError):
        result.require_valid()


def test_fit_short_time_rate_recovers_quadratic_coefficient():
    t = np.linspace(0.0, 0.1, 21)
    rate, residual = fit_short_time_rate(t, 3.0 * t ** 2 - 2.0 * t ** 4)
    assert rate == pytest.approx(3.0, rel=1e-10)
    assert residual < 1e-10


@pytest.mark.parametrize("N", [1, 2, 3])
def test_short_time_decay_matches_n_times_single_atom(dicke_spec, N):
    gamma = 0.05
    spec = dicke_spec(N, gamma=gamma)
    layout = build_layout(spec)
    h = dicke_hamiltonian(spec, layout)
    initial = dicke_state(layout, 0, 1)
    target = with_mode_excitation(dicke_state(layout, 0, 0), "field", 0, 1)
    rate = short_time_rate(h, initial, target, t_max=0.1)
    assert rate == pytest.approx(N * gamma ** 2, rel=5e-3)


def test_short_time_rate_refuses_long_windows(hopping_spec):
    spec = hopping_spec(2, 2, gamma=1.0)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    a = dicke_product_state(layout, {0: 1, 1: 0})
    b = dicke_product_state(layout, {0: 0, 1: 1})
    with pytest.raises(RegimeViolationError):
        short_time_rate(h, a, b, t_max=0.5)


def test_rabi_frequency_is_twice_sqrt_nm_gamma(hopping_spec):
    spec = hopping_spec(2, 2, gamma=0.3)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    a = dicke_product_state(layout, {0: 1, 1: 0})
    b = dicke_product_state(layout, {0: 0, 1: 1})
    assert rabi_frequency(h, a, b) == pytest.approx(2 * math.sqrt(4) * 0.3, rel=1e-6)


def test_detuned_rabi_frequency_is_generalized(hopping_spec):
    gamma, delta = 0.2, 0.3
    spec = hopping_spec(2, 1, gamma=gamma, omega_a=1.0 + delta, omega_b=1.0)
    layout = build_layout(spec)
    h = hopping_hamiltonian(spec, layout)
    a = dicke_product_state(layout, {0: 1, 1: 0})
    b = dicke_product_state(layout, {0: 0, 1: 1})
    expected = 2 * math.sqrt(2 * gamma ** 2 + 0.25 * delta ** 2)
    assert rabi_frequency(h, a, b) == pytest.approx(expected, rel=1e-6)


def test_rabi_frequency_needs_orthogonal_states(hopping_spec):
    spec = hopping_spec(1, 1)
    layout = build_layout(spec)
    a = dicke_product_state(layout, {0: 1, 1: 0})
    with pytest.raises(DomainError):
        rabi_frequency(hopping_hamiltonian(spec, layout), a, a)


def test_dephasing_rate_matrix_counts_differing_sites():
    layout = make_layout([3])
    independent = dephasing_rate_matrix(layout, DephasingModel(kind="independent", rate=0.5))
    collective = dephasing_rate_matrix(layout, DephasingModel(kind="collective", rate=0.5))
    a, b = layout.encode([1, 1, 0]), layout.encode([0, 0, 1])
    assert independent[a, b] == pytest.approx(-2 * 0.5 * 3)
    assert collective[a, b] == pytest.approx(-2 * 0.5 * 1)
    assert np.all(np.diag(independent) == 0)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_coherence_decay_rates(n):
    rate = 0.1
    independent = coherence_decay_rate(DephasingModel(kind="independent", rate=rate), 3, n)
    collective = coherence_decay_rate(DephasingModel(kind="collective", rate=rate), 3, n)
    assert independent == pytest.approx(2 * rate * n, rel=1e-6)
    assert collective == pytest.approx(2 * rate * n * n, rel=1e-6)


def test_decoherence_scaling_exponents():
    independent = measure_decoherence_scaling(DephasingModel(kind="independent", rate=0.1), 4, [1, 2, 3, 4])
    collective = measure_decoherence_scaling(DephasingModel(kind="collective", rate=0.1), 4, [1, 2, 3, 4])
    assert independent.fitted_exponent == pytest.approx(1.0, abs=0.02)
    assert collective.fitted_exponent == pytest.approx(2.0, abs=0.04)
    assert max(s.abs_error / s.predicted for s in independent.samples) < 0.02
    assert "not linearly" in collective.notes


def test_zero_dephasing_refuses_exponent_fit():
    with pytest.raises(DegenerateFitError):
        measure_decoherence_scaling(DephasingModel(kind="independent", rate=0.0), 3, [1, 2, 3])


def test_collective_dephasing_spares_fixed_excitation_sector():
    layout = make_layout([3])
    a = product_state(layout, 0, [0])
    b = product_state(layout, 0, [2])
    rho = density_matrix(superpose([a, b]))
    result = dephasing_evolve(zero_hamiltonian(layout), DephasingModel(kind="collective", rate=0.5), rho,
                              np.linspace(0.0, 4.0, 9), layout, pairs={"ab": (a, b)})
    assert np.allclose(result.observables["ab"], 0.5, atol=1e-10)
    assert result.trace_drift < 1e-7
    assert result.min_eigenvalue > -1e-9


def test_product_state_bures_angle_grows_as_sqrt_n():
    report = measure_product_state_dephasing(5, [1, 2, 3, 4, 5], rate=0.1)
    assert report.fitted_exponent == pytest.approx(0.5, abs=0.02)
    assert report.expected_exponent == 0.5
    assert bures_angle(1.0) == 0.0


def test_density_matrix_budget_is_enforced():
    layout = make_layout([11])
    with pytest.raises(CapacityError):
        dephasing_evolve(zero_hamiltonian(layout), DephasingModel(kind="independent", rate=0.1),
                         np.eye(1), [0.0, 1.0], layout)


@pytest.mark.parametrize("rwa", [True, False])
def test_dicke_evolution_conserves_energy(dicke_spec, rwa):
    spec = dicke_spec(3, gamma=0.05, cutoff=3, rwa=rwa)
    layout = build_layout(spec)
    period = 2.0 * math.pi / (2.0 * math.sqrt(3) * 0.05)
    result = evolve(dicke_hamiltonian(spec, layout), dicke_state(layout, 0, 1), np.linspace(0.0, period, 41))
    assert result.energy_drift < 1e-8
    if rwa:
        assert result.excitation_drift < 1e-9
    else:
        assert result.excitation_drift > 1e-5


def test_hopping_rabi_cycle_conserves_energy_and_excitations(hopping_spec):
    spec = hopping_spec(3, 2, gamma=0.5)
    layout = build_layout(spec)
    period = 2.0 * math.pi / (2.0 * math.sqrt(6) * 0.5)
    result = evolve(hopping_hamiltonian(spec, layout), dicke_product_state(layout, {0: 1, 1: 0}),
                    np.linspace(0.0, period, 41))
    assert result.energy_drift < 1e-8
    assert result.excitation_drift < 1e-9


@pytest.mark.parametrize("kind", ["independent", "collective"])
def test_pure_dephasing_leaves_populations_unchanged(kind):
    layout = make_layout([4])
    ground, excited = dicke_state(layout, 0, 0), dicke_state(layout, 0, 2)
    rho = density_matrix(superpose([ground, excited]))
    result = dephasing_evolve(zero_hamiltonian(layout), DephasingModel(kind=kind, rate=0.3), rho,
                              np.linspace(0.0, 2.0, 11), layout, pairs={"coherence": (ground, excited)})
    assert result.population_drift < 1e-10
    assert result.observables["coherence"][-1] < 0.5 * result.observables["coherence"][0]
