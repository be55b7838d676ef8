import pytest
from pydantic import ValidationError

from core.models import (BathSpec, DephasingModel, DiffusionConfig, FieldMode, RateScalingReport, ScalingSample,
                         SpinGroup, SystemSpec)


def test_system_spec_checks_intra_coupling_symmetry():
    with pytest.raises(ValidationError):
        SystemSpec(group_a=SpinGroup(sites=2), group_b=SpinGroup(sites=1),
                   intra_couplings_a=[[0.0, 0.1], [0.2, 0.0]])


def test_system_spec_rejects_bath_b_without_group_b():
    bath = BathSpec(frequencies=[1.0], couplings=[[0.1]])
    with pytest.raises(ValidationError):
        SystemSpec(group_a=SpinGroup(sites=1), bath_b=bath)


def test_system_spec_rejects_non_finite_coupling():
    with pytest.raises(ValidationError):
        SystemSpec(group_a=SpinGroup(sites=1), field_mode=FieldMode(), inter_coupling=float("nan"))


@pytest.mark.parametrize("group", ["group_a", "group_b"])
@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_system_spec_rejects_non_finite_group_frequency(group, bad):
    groups = {"group_a": SpinGroup(sites=1), "group_b": SpinGroup(sites=1)}
    groups[group] = SpinGroup(sites=1, frequency=bad)
    with pytest.raises(ValidationError, match=f"{group}.frequency"):
        SystemSpec(**groups)


def test_system_spec_is_frozen():
    spec = SystemSpec(group_a=SpinGroup(sites=1))
    with pytest.raises(ValidationError):
        spec.inter_coupling = 1.0


def test_dephasing_model_rejects_negative_rate():
    with pytest.raises(ValidationError):
        DephasingModel(kind="collective", rate=-0.1)


def test_diffusion_config_defaults():
    config = DiffusionConfig()
    assert (config.alpha, config.gamma, config.tau, config.lifetime_T) == (5.0, 0.2, 20.0, 1000.0)
    with pytest.raises(ValidationError):
        DiffusionConfig(lattice_dim=3)


def _sample(x: float) -> ScalingSample:
    return ScalingSample(params={"N": x}, predicted=x, measured=x, abs_error=0.0)


def test_exponent_requires_four_samples_and_residual():
    with pytest.raises(ValidationError):
        RateScalingReport(formula="decay", scaling_variable="N", samples=[_sample(1), _sample(2)],
                          fitted_exponent=1.0, fit_residual=0.0)
    with pytest.raises(ValidationError):
        RateScalingReport(formula="decay", scaling_variable="N", samples=[_sample(x) for x in range(1, 5)],
                          fitted_exponent=1.0)
    report = RateScalingReport(formula="decay", scaling_variable="N", samples=[_sample(x) for x in range(1, 5)],
                               fitted_exponent=1.0, fit_residual=0.0)
    assert list(report.to_frame().columns) == ["N", "predicted", "measured", "abs_err"]
