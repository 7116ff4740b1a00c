from typing import Dict, List, Literal, Optional, Tuple

from pydantic import ConfigDict, Field, model_validator

from flowmap.schemas.analysis import BoundInputs
from flowmap.schemas.base import BaseSchema
from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.schemas.dataset import SamplingDomains
from flowmap.schemas.training import TrainConfig


class SystemConfig(BaseSchema):
	"""Custom system given by sympy right-hand sides"""
	name: str = "custom"
	states: List[str] = Field(..., min_length=1)
	inputs: List[str] = []
	rhs: List[str]
	# Fixed named constants substituted into rhs
	constants: Dict[str, float] = {}
	# Named constants sampled with the data and appended to the model input
	parameters: List[str] = []
	lipschitz: Optional[Tuple[float, float]] = None

	@model_validator(mode="after")
	def _rhs_per_state(self) -> "SystemConfig":
		if len(self.rhs) != len(self.states):
			raise ValueError(f"rhs needs one expression per state ({len(self.states)}), got {len(self.rhs)}")
		return self


class DatasetConfig(BaseSchema):
	size: int = Field(20000, ge=1)
	micro_steps: int = Field(10, ge=1)
	include_delta: bool = True
	noise_std: float = Field(0.0, ge=0)


class ModelConfig(BaseSchema):
	kind: Literal["network", "polynomial"] = "network"
	hidden: List[int] = [80, 80, 80]
	degree: int = Field(2, ge=0)
	init: Literal["glorot_uniform"] = "glorot_uniform"


class ScenarioConfig(BaseSchema):
	"""Prediction scenario: initial state, input expressions of t, horizon and step"""
	x0: List[float]
	signal: List[str] = []
	extras: Dict[str, float] = {}
	t_end: float = Field(..., gt=0)
	delta: float = Field(0.1, gt=0)


class GronwallCheckConfig(BaseSchema):
	signal: List[str]
	basis: BasisSpec = BasisSpec(kind=BasisKind.TAYLOR, degree=1)
	T: float = Field(5.0, gt=0)
	delta: float = Field(0.1, gt=0)
	micro_steps: int = Field(10, ge=1)
	x0: Optional[List[float]] = None


class RolloutCheckConfig(BaseSchema):
	"""Exact one-step map of the system under constant inputs, perturbed by noise <= E"""
	x0: List[float]
	inputs: List[float] = []
	extras: Dict[str, float] = {}
	delta: float = Field(0.1, gt=0)
	n: int = Field(100, ge=0)
	E: float = Field(1e-3, ge=0)
	L_phi: Optional[float] = Field(None, ge=0)
	noise: Literal["uniform", "aligned"] = "uniform"


class BoundsConfig(BaseSchema):
	table: List[BoundInputs] = []
	gronwall: Optional[GronwallCheckConfig] = None
	rollout: Optional[RolloutCheckConfig] = None


class ExperimentConfig(BaseSchema):
	preset: Optional[str] = None
	system: Optional[SystemConfig] = None
	basis: BasisSpec = BasisSpec(kind=BasisKind.LAGRANGE, degree=2)
	domains: Optional[SamplingDomains] = None
	dataset: DatasetConfig = DatasetConfig()
	model: ModelConfig = ModelConfig()
	train: TrainConfig = TrainConfig()
	scenario: Optional[ScenarioConfig] = None
	bounds: BoundsConfig = BoundsConfig()
	output_dir: str = "runs/default"
	seed: int = Field(0, ge=0, lt=2 ** 64)

	@model_validator(mode="after")
	def _one_system(self) -> "ExperimentConfig":
		if (self.preset is None) == (self.system is None):
			raise ValueError("exactly one of 'preset' or 'system' must be given")
		if self.system is not None and self.domains is None:
			raise ValueError("a custom system needs explicit sampling 'domains'")
		return self

	model_config = ConfigDict(
		extra="forbid",
		json_schema_extra={
			"example": {
				"preset": "linear_scalar",
				"basis": {"kind": "lagrange", "degree": 2},
				"dataset": {"size": 20000, "micro_steps": 10},
				"model": {"kind": "network", "hidden": [80, 80, 80]},
				"scenario": {"x0": [2.0], "signal": ["sin(4*t) + 1", "cos(t**2/1000)"], "t_end": 100.0, "delta": 0.1},
				"output_dir": "runs/ex1",
				"seed": 0,
			}
		},
	)
