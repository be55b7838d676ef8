import math

import pytest

from core.diffusion import (effective_step_length, feasibility_boundary, headline_reproduction,
                            naive_hop_count_and_time, native_hop_gap, required_alpha_tau,
                            required_decoherence_time, required_step_length, simulate_walk, sweep, validate_axes)
from core.exceptions import DomainError
from core.models import DiffusionConfig, DiffusionResult
from core.utils import loglog_fit


def test_step_lengths():
    assert effective_step_length(5.0, 0.2, 20.0) == pytest.approx(20.0)
    assert required_step_length(300.0, 0.2, 1000.0) == pytest.approx(300.0 / math.sqrt(200.0))
    with pytest.raises(DomainError):
        effective_step_length(0.0, 0.2, 20.0)


def test_naive_diffusion_estimate():
    hops, hop_time = naive_hop_count_and_time(300.0, 1000.0)
    assert hops == pytest.approx(9e4)
    assert hop_time * 1000.0 == pytest.approx(11.11, abs=0.01)
    with pytest.raises(DomainError):
        naive_hop_count_and_time(0.5, 1000.0)


def test_decoherence_time_threshold():
    assert required_alpha_tau(300.0, 0.2, 1000.0) == pytest.approx(106.07, abs=0.01)
    assert required_decoherence_time(5.0, 300.0, 0.2, 1000.0) == pytest.approx(21.21, abs=0.01)
    assert native_hop_gap(5.0, 300.0, 1000.0) == pytest.approx(450.0)


def test_headline_numbers_are_reproduced():
    table = headline_reproduction()
    assert list(table.columns) == ["quantity", "computed", "reference", "criterion", "passed"]
    assert table["passed"].all()
    assert len(table) == 7


def test_walk_is_independent_of_worker_count():
    config = DiffusionConfig(walkers=3000, rng_seed=11)
    sequential = simulate_walk(config, max_workers=1)
    parallel = simulate_walk(config, max_workers=4)
    assert sequential == parallel


@pytest.mark.parametrize("lattice_dim", [1, 2])
@pytest.mark.parametrize("lifetime_model", ["exponential", "fixed"])
def test_rms_displacement_follows_step_times_root_hops(lattice_dim, lifetime_model):
    config = DiffusionConfig(walkers=4000, lattice_dim=lattice_dim, lifetime_model=lifetime_model, rng_seed=2)
    result = simulate_walk(config)
    expected = result.step_length_ell * math.sqrt(config.gamma * config.lifetime_T)
    assert result.rms_displacement_units == pytest.approx(expected, rel=0.10)
    assert result.incoherent_hops_mean == pytest.approx(200.0, rel=0.05)
    assert result.rms_displacement_nm == pytest.approx(result.rms_displacement_units * 7.0)
    assert result.condition_met == (result.step_length_ell > result.required_step_length)


def test_infeasible_walk_falls_short():
    result = simulate_walk(DiffusionConfig(alpha=0.1, walkers=1000))
    assert not result.condition_met
    assert result.walkers_reaching_target == 0.0


def test_single_walker_has_no_standard_error():
    result = simulate_walk(DiffusionConfig(walkers=1))
    assert result.rms_standard_error is None
    with pytest.raises(ValueError):
        DiffusionResult(step_length_ell=1.0, required_step_length=1.0, rms_displacement_units=1.0,
                        rms_displacement_nm=7.0, incoherent_hops_mean=1.0, condition_met=False,
                        walkers_reaching_target=0.0, walkers=10)


def test_sweep_orders_rows_by_axis_values():
    template = DiffusionConfig(walkers=200)
    table = sweep(template, {"tau": [10.0, 20.0], "alpha": [2.0, 1.0]})
    assert list(table[["alpha", "tau"]].itertuples(index=False, name=None)) == [
        (1.0, 10.0), (1.0, 20.0), (2.0, 10.0), (2.0, 20.0)]
    assert (table["step_length_ell"] == table["alpha"] * 0.2 * table["tau"]).all()


def test_sweep_axes_are_validated():
    with pytest.raises(DomainError):
        validate_axes({"alpha": [1.0, 3.0, 2.0]})
    with pytest.raises(DomainError):
        validate_axes({"beta": [1.0]})
    with pytest.raises(DomainError):
        validate_axes({})
    assert validate_axes({"alpha": [3.0, 2.0, 1.0]}) == {"alpha": [1.0, 2.0, 3.0]}


def test_feasibility_boundary():
    frame = feasibility_boundary(DiffusionConfig(), [1.0, 5.0, 10.0])
    assert frame["alpha_tau_ps"].to_numpy() == pytest.approx([106.066] * 3, abs=1e-3)
    assert frame.loc[frame["alpha"] == 5.0, "tau_min_ps"].iloc[0] == pytest.approx(21.21, abs=0.01)


@pytest.mark.slow
def test_large_walk_is_deterministic():
    config = DiffusionConfig(walkers=100_000, rng_seed=7)
    assert simulate_walk(config, max_workers=4) == simulate_walk(config, max_workers=2)


def test_rms_scales_linearly_with_step_length():
    alphas = [1.0, 2.0, 5.0, 10.0]
    results = [simulate_walk(DiffusionConfig(alpha=a, walkers=2000, rng_seed=3)) for a in alphas]
    ells = [r.step_length_ell for r in results]
    assert max(ells) / min(ells) == pytest.approx(10.0)
    exponent, _ = loglog_fit(ells, [r.rms_displacement_units for r in results])
    assert exponent == pytest.approx(1.0, abs=0.02)


def _boundary_pair(walkers: int, factor: float = 1.5):
    template = DiffusionConfig(walkers=walkers, rng_seed=4)
    required = required_step_length(template.target_L, template.gamma, template.lifetime_T)
    tau = required / (template.alpha * template.gamma)
    edge = simulate_walk(template.model_copy(update={"tau": tau}))
    wider = simulate_walk(template.model_copy(update={"tau": factor * tau}))
    return edge, wider


def test_step_margin_reaches_target_more_often():
    edge, wider = _boundary_pair(5000)
    assert wider.step_length_ell == pytest.approx(1.5 * edge.required_step_length)
    assert wider.walkers_reaching_target > edge.walkers_reaching_target


@pytest.mark.slow
def test_boundary_walk_with_many_walkers():
    edge, wider = _boundary_pair(100_000)
    assert edge.walkers == 100_000
    assert edge.rms_displacement_units == pytest.approx(300.0, rel=0.10)
    assert wider.walkers_reaching_target > edge.walkers_reaching_target
