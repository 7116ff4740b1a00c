"""Named benchmark systems with their sampling domains and prediction scenarios,
and the benchmark experiment configurations built on top of them."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from flowmap.core.exceptions import ConfigError
from flowmap.schemas.basis import BasisSpec
from flowmap.schemas.dataset import SamplingDomains
from flowmap.schemas.experiment import (
	BoundsConfig,
	ExperimentConfig,
	GronwallCheckConfig,
	ModelConfig,
	RolloutCheckConfig,
	ScenarioConfig,
	SystemConfig,
)
from flowmap.schemas.base import Interval
from flowmap.services.dynamics import (
	AnySystem,
	Lipschitz,
	forced_oscillator,
	heat_family,
	heat_grid,
	linear_scalar,
	predator_prey,
	symbolic_family,
	symbolic_system,
)

logger = logging.getLogger(__name__)

I_DELTA: Interval = (0.05, 0.15)
HEAT_GRID = 22


@dataclass(frozen=True)
class Preset:
	name: str
	build: Callable[[], AnySystem]
	state_interval: List[Interval]
	# One point-value range per input channel, repeated for every coefficient
	input_interval: List[Interval]
	scenario: ScenarioConfig
	extra_params: Tuple[Tuple[str, Interval], ...] = ()

	def domains(self, basis: BasisSpec) -> SamplingDomains:
		return SamplingDomains(
			I_x=self.state_interval,
			I_Gamma=[[iv] * basis.n_b for iv in self.input_interval],
			I_Delta=I_DELTA,
			extra_params=dict(self.extra_params),
		)


def _heat_initial_state() -> List[float]:
	return np.sin(np.pi * heat_grid(HEAT_GRID)[1:-1]).tolist()


PRESETS: Dict[str, Preset] = {
	"linear_scalar": Preset(
		name="linear_scalar",
		build=linear_scalar,
		state_interval=[(-2.0, 2.0)],
		input_interval=[(-5.0, 5.0), (-5.0, 5.0)],
		scenario=ScenarioConfig(x0=[2.0], signal=["sin(4*t) + 1", "cos(t**2/1000)"], t_end=100.0, delta=0.1),
	),
	"predator_prey": Preset(
		name="predator_prey",
		build=predator_prey,
		state_interval=[(0.0, 5.0)] * 2,
		input_interval=[(0.0, 5.0)],
		scenario=ScenarioConfig(x0=[2.0, 1.0], signal=["sin(t/3) + cos(t) + 2"], t_end=100.0, delta=0.1),
	),
	"forced_oscillator": Preset(
		name="forced_oscillator",
		build=forced_oscillator,
		state_interval=[(-3.0, 3.0)] * 2,
		input_interval=[(-3.0, 3.0), (-3.0, 3.0)],
		scenario=ScenarioConfig(x0=[1.0, 0.0], signal=["cos(t)", "t/50"], t_end=100.0, delta=0.1),
	),
	"heat22": Preset(
		name="heat22",
		build=lambda: heat_family(HEAT_GRID),
		state_interval=[(0.0, 2.0)] * (HEAT_GRID - 2),
		input_interval=[(-2.0, 2.0)],
		scenario=ScenarioConfig(
			x0=_heat_initial_state(),
			signal=["t - floor(t)"],
			extras={"mu": 1.0, "sigma": 0.5},
			t_end=2.0,
			delta=0.1,
		),
		extra_params=(("mu", (0.0, 3.0)), ("sigma", (0.05, 0.5))),
	),
}


def get_preset(name: str) -> Preset:
	try:
		return PRESETS[name]
	except KeyError:
		raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}") from None


def build_system(config: ExperimentConfig) -> AnySystem:
	if config.preset is not None:
		return get_preset(config.preset).build()
	sys_cfg: SystemConfig = config.system
	lipschitz = Lipschitz(*sys_cfg.lipschitz) if sys_cfg.lipschitz else None
	if sys_cfg.parameters:
		return symbolic_family(
			sys_cfg.name, sys_cfg.states, sys_cfg.inputs, sys_cfg.parameters, sys_cfg.rhs, sys_cfg.constants, lipschitz
		)
	return symbolic_system(sys_cfg.name, sys_cfg.states, sys_cfg.inputs, sys_cfg.rhs, sys_cfg.constants, lipschitz)


def sampling_domains(config: ExperimentConfig) -> SamplingDomains:
	if config.domains is not None:
		return config.domains
	return get_preset(config.preset).domains(config.basis)


def scenario_for(config: ExperimentConfig) -> ScenarioConfig:
	if config.scenario is not None:
		return config.scenario
	if config.preset is None:
		raise ConfigError("a custom system needs an explicit 'scenario'")
	return get_preset(config.preset).scenario


# =====================================
# Benchmark experiments
# =====================================

POLY_SWEEP_DEGREES = (1, 2, 3, 4, 5)

# Bound checks run alongside the scalar benchmark
SCALAR_BOUNDS = BoundsConfig(
	gronwall=GronwallCheckConfig(signal=["1", "cos(t)"], T=5.0, delta=0.1),
	rollout=RolloutCheckConfig(x0=[2.0], inputs=[1.0, 0.0], delta=0.1, n=100, E=1e-3, L_phi=float(np.exp(-0.1))),
)

BENCH: Dict[str, ExperimentConfig] = {
	"ex1": ExperimentConfig(preset="linear_scalar", bounds=SCALAR_BOUNDS, output_dir="runs/ex1"),
	"ex1_poly": ExperimentConfig(
		preset="linear_scalar",
		model=ModelConfig(kind="polynomial", degree=2),
		scenario=ScenarioConfig(x0=[2.0], signal=["sin(t/10) + 1", "cos(t)"], t_end=100.0, delta=0.1),
		output_dir="runs/ex1_poly",
	),
	"ex2": ExperimentConfig(preset="predator_prey", output_dir="runs/ex2"),
	"ex3": ExperimentConfig(preset="forced_oscillator", output_dir="runs/ex3"),
	"ex4": ExperimentConfig(preset="heat22", output_dir="runs/ex4"),
}


def bench_config(example: str) -> ExperimentConfig:
	try:
		return BENCH[example].model_copy(deep=True)
	except KeyError:
		raise ConfigError(f"unknown benchmark {example!r}; valid benchmarks: {', '.join(BENCH)}") from None
