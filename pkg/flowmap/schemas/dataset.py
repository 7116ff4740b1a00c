from typing import Dict, List, Literal, Optional

from pydantic import Field, field_validator, model_validator

from flowmap.schemas.base import BaseSchema, Box, FrozenSchema, Interval, check_interval
from flowmap.schemas.basis import BasisSpec


class InputLayout(FrozenSchema):
	"""Shape of the model input [x; Γ row-major; extras; δ]"""
	d: int = Field(..., ge=1)
	input_arity: int = Field(..., ge=0)
	n_b: int = Field(..., ge=1)
	extra_names: List[str] = []
	include_delta: bool = True
	# Step used when δ is not a model input
	fixed_delta: Optional[float] = None

	@model_validator(mode="after")
	def _fixed_delta_mode(self) -> "InputLayout":
		if not self.include_delta and (self.fixed_delta is None or self.fixed_delta <= 0):
			raise ValueError("fixed-delta layouts need a positive fixed_delta")
		return self

	@property
	def n_gamma(self) -> int:
		return self.input_arity * self.n_b

	@property
	def n_extra(self) -> int:
		return len(self.extra_names)

	@property
	def m(self) -> int:
		return self.d + self.n_gamma + self.n_extra + (1 if self.include_delta else 0)


class SamplingDomains(BaseSchema):
	I_x: List[Interval]
	I_Gamma: List[List[Interval]]
	I_Delta: Interval
	extra_params: Dict[str, Interval] = {}

	@field_validator("I_x")
	@classmethod
	def _state_intervals(cls, v: List[Interval]) -> List[Interval]:
		if not v:
			raise ValueError("I_x needs one interval per state coordinate")
		return [check_interval(iv, f"I_x[{i}]") for i, iv in enumerate(v)]

	@field_validator("I_Gamma")
	@classmethod
	def _gamma_intervals(cls, v: List[List[Interval]]) -> List[List[Interval]]:
		widths = {len(row) for row in v}
		if len(widths) > 1:
			raise ValueError("every I_Gamma row needs the same number of coefficients")
		return [[check_interval(iv, f"I_Gamma[{c}][{j}]") for j, iv in enumerate(row)] for c, row in enumerate(v)]

	@field_validator("I_Delta")
	@classmethod
	def _delta_interval(cls, v: Interval) -> Interval:
		lo, hi = check_interval(v, "I_Delta")
		if lo <= 0:
			raise ValueError(f"I_Delta must be positive, got {v}")
		return lo, hi

	@field_validator("extra_params")
	@classmethod
	def _extra_intervals(cls, v: Dict[str, Interval]) -> Dict[str, Interval]:
		return {name: check_interval(iv, f"extra_params[{name}]") for name, iv in v.items()}

	@property
	def d(self) -> int:
		return len(self.I_x)

	@property
	def input_arity(self) -> int:
		return len(self.I_Gamma)

	@property
	def n_b(self) -> int:
		return len(self.I_Gamma[0]) if self.I_Gamma else 0

	@property
	def extra_names(self) -> List[str]:
		return list(self.extra_params)


class DatasetMeta(BaseSchema):
	system: str
	basis: BasisSpec
	micro_steps: int
	source: Literal["sampled", "trajectories"] = "sampled"
	dropped: int = 0
	noise_std: float = 0.0


class DatasetSidecar(BaseSchema):
	"""JSON stored next to the CSV rows of a training set"""
	format: Literal["flowmap-dataset"] = "flowmap-dataset"
	version: str
	layout: InputLayout
	meta: DatasetMeta
	seed: Optional[int] = None
	domains: Optional[SamplingDomains] = None
	coverage: Box
	n_samples: int
