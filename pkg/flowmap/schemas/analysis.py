from typing import List, Literal, Optional

from pydantic import Field

from flowmap.schemas.base import BaseSchema


class BoundInputs(BaseSchema):
	"""Constants entering the combined error estimate"""
	L1: float = Field(0.0, ge=0)
	L2: float = Field(0.0, ge=0)
	eta: float = Field(0.0, ge=0)
	L_phi: float = Field(0.0, ge=0)
	E: float = Field(0.0, ge=0)
	delta: float = Field(0.1, gt=0)
	n: int = Field(0, ge=0)
	t: float = Field(0.0, ge=0)


class BoundRow(BaseSchema):
	inputs: BoundInputs
	input_bound: float
	rollout_bound: float
	combined_bound: float
	appendix_bound: float


class GronwallReport(BaseSchema):
	check: Literal["gronwall"] = "gronwall"
	system: str
	basis: str
	degree: int
	delta: float
	L1: float
	L2: float
	eta: float
	times: List[float]
	measured: List[float]
	bound: List[float]
	satisfied: bool
	# Largest measured / bound ratio over points with a nonzero bound
	max_ratio: float


class RolloutBoundReport(BaseSchema):
	check: Literal["rollout"] = "rollout"
	noise: Literal["uniform", "aligned"]
	E: float
	L_phi: float
	L_phi_estimated: bool
	steps: List[int]
	measured: List[float]
	bound: List[float]
	satisfied: bool
	max_ratio: float
	seed: Optional[int] = None


class ModelLipschitzReport(BaseSchema):
	"""State Lipschitz constant of a trained one-step model, maximized over the sampled (Γ, δ, extras)"""
	model: str
	L_phi: float
	samples: int
	seed: Optional[int] = None
