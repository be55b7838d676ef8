import json
import os

import pandas as pd
import pytest

from app import EXIT_CONFIG, EXIT_OK, EXIT_TOLERANCE, main
from core import experiments
from core.exceptions import ConfigurationError, DegenerateFitError
from core.experiment_engine import ExperimentEngine, deep_merge
from core.experiments import RUNNERS, DephasingParams, ExperimentOutput, parse_params, run_dephasing, run_diffusion


def _write_config(tmp_path, payload) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _manifest(out_dir) -> dict:
    with open(os.path.join(out_dir, "manifest.json"), encoding="utf-8") as f:
        return json.load(f)


def _data_hashes(out_dir) -> dict:
    return {o["path"]: o["sha256"] for o in _manifest(out_dir)["outputs"] if o["hashed"]}


SMALL_SECTORS = {"sectors": {"N": 2, "M": 1, "bath_modes": 1, "cutoff": 2}}


def test_superradiance_command_passes(repo_root, tmp_path):
    config = _write_config(tmp_path, {"superradiance": {"N_max": 4, "dynamic_N": [1, 2]}})
    out = tmp_path / "out"
    assert main(["superradiance", "--config", config, "--out", str(out)]) == EXIT_OK
    table = pd.read_csv(out / "superradiance_decay.csv")
    for column in ("N", "n", "predicted", "matrix_element", "dynamic_rate", "abs_err"):
        assert column in table.columns
    assert (table["abs_err"] < 1e-6).all()
    first = table.iloc[0]
    assert (first["N"], first["n"]) == (1, 1)
    assert first["matrix_element"] == pytest.approx(0.05 ** 2)
    manifest = _manifest(out)
    assert manifest["exit_code"] == 0
    assert {o["path"] for o in manifest["outputs"]} >= {"superradiance_decay.csv", "checks.csv",
                                                        "superradiance_summary.json"}


def test_supertransfer_nm_table(repo_root, tmp_path):
    config = _write_config(tmp_path, {"supertransfer": {
        "element_max": 3, "transfer_max": 2, "rabi_pairs": [[1, 1], [2, 1]], "short_time_max": 2}})
    out = tmp_path / "out"
    assert main(["supertransfer", "--config", config, "--out", str(out)]) == EXIT_OK
    table = pd.read_csv(out / "supertransfer_nm_scaling.csv")
    assert ((table["ratio"] - 1.0).abs() < 1e-6).all()
    row = table[(table["N"] == 3) & (table["M"] == 2)].iloc[0]
    assert row["measured"] == pytest.approx(6.0)


def test_detuned_supertransfer_reports_suppressed_transfer(repo_root, tmp_path):
    config = _write_config(tmp_path, {"supertransfer": {
        "element_max": 2, "transfer_max": 1, "rabi_pairs": [[1, 1]], "short_time_max": 1, "omega_a": 1.5}})
    out = tmp_path / "out"
    main(["supertransfer", "--config", config, "--out", str(out)])
    with open(out / "supertransfer_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["detuned"] is True
    assert summary["max_transfer_probability"][0] == pytest.approx(4 / (4 + 0.25))


def test_sectors_command_reports_zero_leakage_and_rank(repo_root, tmp_path):
    out = tmp_path / "out"
    assert main(["sectors", "--config", _write_config(tmp_path, SMALL_SECTORS), "--out", str(out)]) == EXIT_OK
    summary = pd.read_csv(out / "sectors_summary.csv").iloc[0]
    assert summary["leakage_frobenius"] < 1e-12
    assert summary["cooperative_rank"] == summary["expected_rank"] == 3 * 2 * 2 * 2
    series = pd.read_csv(out / "sectors_leakage_vs_disorder.csv")
    assert len(series) == 4


def test_dephasing_command_flags_collective_scaling(repo_root, tmp_path):
    config = _write_config(tmp_path, {"dephasing": {"N": 4, "n_range": [1, 2, 3, 4]}})
    out = tmp_path / "out"
    assert main(["dephasing", "--config", config, "--out", str(out)]) == EXIT_OK
    with open(out / "dephasing_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["models"]["collective"]["fitted_exponent"] == pytest.approx(2.0, abs=0.04)
    assert summary["collective_differs_from_stated"] is True


def test_dephasing_without_noise_refuses_fit(repo_root, tmp_path):
    config = _write_config(tmp_path, {"dephasing": {"N": 3, "n_range": [1, 2, 3], "rate": 0.0}})
    out = tmp_path / "out"
    assert main(["dephasing", "--config", config, "--out", str(out)]) == EXIT_OK
    with open(out / "dephasing_summary.json", encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["models"]["independent"]["fitted_exponent"] is None


def test_diffusion_command_records_unit_conversions(repo_root, tmp_path):
    config = _write_config(tmp_path, {"diffusion": {"walkers": 2000, "boundary_walkers": 3000,
                                                   "sweep": {"alpha": [4.0, 5.0], "tau": [20.0]}}})
    out = tmp_path / "out"
    assert main(["diffusion", "--config", config, "--out", str(out), "--seed", "5"]) == EXIT_OK
    headline = pd.read_csv(out / "diffusion_headline.csv")
    assert headline["passed"].all()
    manifest = _manifest(out)
    conversions = {c["field"]: c["value"] for c in manifest["unit_conversions"]}
    assert conversions["lifetime_T"] == pytest.approx(1000.0)
    assert manifest["seeds"] == {"seed": 5}
    assert len(pd.read_csv(out / "diffusion_sweep.csv")) == 2


def test_all_commands_with_quick_check_config(repo_root, tmp_path):
    out = tmp_path / "out"
    assert main(["all", "--config", "data/quick_check.json", "--out", str(out)]) == EXIT_OK
    checks = pd.read_csv(out / "checks.csv")
    assert set(checks["command"]) == {"superradiance", "supertransfer", "sectors", "dephasing", "diffusion"}
    assert checks["passed"].all()
    assert set(_manifest(out)["stage_timings"]) == set(checks["command"])


def test_reruns_reproduce_data_hashes(repo_root, tmp_path):
    config = _write_config(tmp_path, SMALL_SECTORS)
    first, second = tmp_path / "a", tmp_path / "b"
    main(["sectors", "--config", config, "--out", str(first), "--workers", "2"])
    main(["sectors", "--config", config, "--out", str(second)])

    assert _data_hashes(first) == _data_hashes(second)


def test_output_dir_env_override(repo_root, tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("SUPERTRANSFER_OUTPUT_DIR", str(target))
    assert main(["sectors", "--config", _write_config(tmp_path, SMALL_SECTORS)]) == EXIT_OK
    assert (target / "manifest.json").exists()


@pytest.mark.parametrize("payload", [
    {"superradiance": {"N_max": 0}},
    {"diffusion": {"tau": "3 kg"}},
    {"diffusion": {"sweep": {"beta": [1.0]}}},
    {"dephasing": {"N": 3, "n_range": [4]}},
    {"seed": -1},
])
def test_invalid_config_exits_2_without_outputs(repo_root, tmp_path, payload):
    out = tmp_path / "out"
    assert main(["all", "--config", _write_config(tmp_path, payload), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_malformed_config_file_exits_2(repo_root, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["superradiance", "--config", str(path), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()


def test_unknown_preset_exits_2(repo_root, tmp_path):
    assert main(["sectors", "--preset", "nope", "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_unknown_command_is_a_usage_error(repo_root):
    with pytest.raises(SystemExit) as excinfo:
        main(["teleport"])
    assert excinfo.value.code == 2


def test_config_precedence(repo_root):
    engine = ExperimentEngine()
    resolved = engine.resolve_config("paper-defaults", {"seed": 4, "sectors": {"N": 3}}, seed=9)
    assert resolved["seed"] == 9
    assert resolved["sectors"]["N"] == 3
    assert resolved["sectors"]["M"] == 2
    assert [p["id"] for p in engine.get_available_presets()] == ["paper-defaults"]
    with pytest.raises(ConfigurationError):
        engine.resolve_config("paper-defaults", workers=0)


def test_deep_merge_does_not_mutate_inputs():
    base = {"a": {"b": 1, "c": 2}}
    merged = deep_merge(base, {"a": {"b": 5}})
    assert merged == {"a": {"b": 5, "c": 2}}
    assert base == {"a": {"b": 1, "c": 2}}


def _failing_runner(params, max_workers=None, progress_callback=None):
    out = ExperimentOutput()
    out.tables["sectors_summary"] = pd.DataFrame({"x": [1]})
    out.check("homogeneous_leakage", 1.0, 1e-12)
    return out


def test_failing_check_exits_1_and_still_writes_manifest(repo_root, tmp_path, monkeypatch):
    monkeypatch.setitem(RUNNERS, "sectors", _failing_runner)
    out = tmp_path / "out"
    assert main(["sectors", "--out", str(out)]) == EXIT_TOLERANCE
    assert _manifest(out)["exit_code"] == 1
    checks = pd.read_csv(out / "checks.csv")
    assert not checks["passed"].any()


def test_engine_reports_tolerance_failure(repo_root, monkeypatch):
    monkeypatch.setitem(RUNNERS, "sectors", _failing_runner)
    engine = ExperimentEngine()
    result = engine.process("sectors", engine.resolve_config("paper-defaults"))
    assert result["success"] is False
    assert result["exception_type"] == "ToleranceFailure"
    assert [c["name"] for c in result["failed_checks"]] == ["homogeneous_leakage"]


SMALL_DIFFUSION = {"diffusion": {"walkers": 1500, "boundary_walkers": 3000,
                                 "sweep": {"alpha": [2.0, 5.0], "tau": [10.0, 20.0]}}}


def test_diffusion_reruns_reproduce_csv_bytes(repo_root, tmp_path):
    config = _write_config(tmp_path, SMALL_DIFFUSION)
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["diffusion", "--config", config, "--out", str(first), "--workers", "3", "--seed", "8"]) == EXIT_OK
    assert main(["diffusion", "--config", config, "--out", str(second), "--seed", "8"]) == EXIT_OK
    for name in ("diffusion_sweep.csv", "diffusion_boundary_walk.csv", "diffusion_step_scaling.csv", "checks.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert _data_hashes(first) == _data_hashes(second)


def test_diffusion_checks_step_scaling_and_margin(repo_root, tmp_path):
    out = tmp_path / "out"
    assert main(["diffusion", "--config", _write_config(tmp_path, SMALL_DIFFUSION), "--out", str(out)]) == EXIT_OK
    checks = pd.read_csv(out / "checks.csv").set_index("name")
    assert checks.loc["rms_vs_step_exponent", "value"] < 0.02
    assert checks.loc["margin_reaches_target_more_often", "passed"]
    boundary = pd.read_csv(out / "diffusion_boundary_walk.csv")
    assert list(boundary["walkers"]) == [3000, 3000]
    assert list(boundary["step_over_required"]) == [1.0, 1.5]
    assert boundary["walkers_reaching_target"].is_monotonic_increasing
    scaling = pd.read_csv(out / "diffusion_step_scaling.csv")
    assert scaling["step_length_ell"].max() / scaling["step_length_ell"].min() == pytest.approx(10.0)


@pytest.mark.slow
def test_diffusion_boundary_walk_defaults_to_many_walkers():
    params, _ = parse_params("diffusion", {"walkers": 1000, "sweep": {"alpha": [5.0]}}, seed=0)
    assert params.boundary_walkers == 100_000
    result = run_diffusion(params)
    assert result.summary["boundary_walkers"] == 100_000
    assert all(c["passed"] for c in result.checks)


def test_drift_checks_are_recorded(repo_root, tmp_path):
    out = tmp_path / "out"
    assert main(["all", "--config", "data/quick_check.json", "--out", str(out)]) == EXIT_OK
    checks = pd.read_csv(out / "checks.csv").set_index("name")
    for name, limit in [("rwa_energy_drift", 1e-8), ("rwa_excitation_drift", 1e-9),
                        ("rabi_energy_drift", 1e-8), ("rabi_excitation_drift", 1e-9),
                        ("independent_population_drift", 1e-10), ("collective_population_drift", 1e-10)]:
        assert checks.loc[name, "value"] < limit
        assert checks.loc[name, "tolerance"] == pytest.approx(limit)


def test_dephasing_without_noise_records_measured_rates():
    result = run_dephasing(DephasingParams(N=3, n_range=[1, 2, 3], rate=0.0))
    checks = {c["name"]: c for c in result.checks}
    for kind in ("independent", "collective"):
        vanish = checks[f"{kind}_rates_vanish"]
        assert vanish["passed"]
        assert vanish["value"] < 1e-10
        assert f"{kind}_scaling_fit" not in checks


def test_dephasing_fit_failure_with_noise_fails_the_run(monkeypatch):
    def _degenerate(model, N, n_range, max_workers=None):
        raise DegenerateFitError("coherence vanished inside the fit window")

    monkeypatch.setattr(experiments, "measure_decoherence_scaling", _degenerate)
    result = run_dephasing(DephasingParams(N=3, n_range=[1, 2, 3], rate=0.1))
    checks = {c["name"]: c for c in result.checks}
    assert not checks["independent_scaling_fit"]["passed"]
    assert not checks["collective_scaling_fit"]["passed"]
    assert "independent_rates_vanish" not in checks
