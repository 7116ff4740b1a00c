import pytest
from pydantic import ValidationError

from flowmap.core.exceptions import ConfigError
from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.schemas.experiment import ExperimentConfig
from flowmap.services.dynamics import SystemFamily
from flowmap.services.presets import (
	BENCH,
	PRESETS,
	bench_config,
	build_system,
	get_preset,
	sampling_domains,
	scenario_for,
)


def test_unknown_preset_lists_valid_names():
	with pytest.raises(ConfigError) as exc_info:
		get_preset("van_der_pol")
	assert "valid presets" in exc_info.value.detail
	for name in PRESETS:
		assert name in exc_info.value.detail


def test_scalar_preset_domains():
	cfg = ExperimentConfig(preset="linear_scalar")
	domains = sampling_domains(cfg)
	assert domains.I_x == [(-2.0, 2.0)]
	assert domains.I_Delta == (0.05, 0.15)
	assert domains.input_arity == 2
	assert domains.n_b == 3
	assert domains.I_Gamma[0] == [(-5.0, 5.0)] * 3


def test_domains_follow_basis_degree():
	cfg = ExperimentConfig(preset="predator_prey", basis=BasisSpec(kind=BasisKind.LEGENDRE, degree=4))
	assert sampling_domains(cfg).n_b == 5


def test_heat_preset_is_a_family():
	cfg = ExperimentConfig(preset="heat22")
	system = build_system(cfg)
	assert isinstance(system, SystemFamily)
	assert system.d == 20
	assert sampling_domains(cfg).extra_names == ["mu", "sigma"]
	assert scenario_for(cfg).extras == {"mu": 1.0, "sigma": 0.5}


def test_config_needs_exactly_one_system():
	with pytest.raises(ValidationError, match="exactly one"):
		ExperimentConfig()
	with pytest.raises(ValidationError, match="exactly one"):
		ExperimentConfig(preset="linear_scalar", system={"states": ["x"], "rhs": ["-x"]}, domains={
			"I_x": [(0.0, 1.0)], "I_Gamma": [], "I_Delta": (0.1, 0.1),
		})


def test_custom_system_needs_domains():
	with pytest.raises(ValidationError, match="domains"):
		ExperimentConfig(system={"states": ["x"], "rhs": ["-x"]})


def test_config_rejects_unknown_keys():
	with pytest.raises(ValidationError):
		ExperimentConfig(preset="linear_scalar", epochs=10)


def test_custom_system_without_scenario():
	cfg = ExperimentConfig(
		system={"states": ["x"], "rhs": ["-x"]},
		domains={"I_x": [(0.0, 1.0)], "I_Gamma": [], "I_Delta": (0.1, 0.1)},
	)
	with pytest.raises(ConfigError, match="scenario"):
		scenario_for(cfg)


def test_bench_configs_are_copies():
	cfg = bench_config("ex1")
	cfg.dataset.size = 5
	assert BENCH["ex1"].dataset.size == 20000
	with pytest.raises(ConfigError, match="valid benchmarks"):
		bench_config("ex9")


def test_polynomial_sweep_benchmark():
	cfg = bench_config("ex1_poly")
	assert cfg.model.kind == "polynomial"
	assert cfg.scenario.signal == ["sin(t/10) + 1", "cos(t)"]
