import math
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class BaseSchema(BaseModel):
	"""Fail-closed schema: unknown keys are rejected."""
	model_config = ConfigDict(extra="forbid")


class FrozenSchema(BaseSchema):
	model_config = ConfigDict(extra="forbid", frozen=True)


Interval = Tuple[float, float]


def check_interval(value: Interval, name: str = "interval") -> Interval:
	lo, hi = float(value[0]), float(value[1])
	if not (math.isfinite(lo) and math.isfinite(hi)):
		raise ValueError(f"{name} bounds must be finite, got {value}")
	if lo > hi:
		raise ValueError(f"{name} must satisfy lo <= hi, got {value}")
	return lo, hi


class Box(FrozenSchema):
	"""Axis-aligned box, one (lo, hi) pair per coordinate"""
	lo: List[float]
	hi: List[float]

	@model_validator(mode="after")
	def _same_length(self) -> "Box":
		if len(self.lo) != len(self.hi):
			raise ValueError("box lo/hi lengths differ")
		return self

	@field_validator("lo", "hi")
	@classmethod
	def _finite(cls, v: List[float]) -> List[float]:
		if not all(math.isfinite(x) for x in v):
			raise ValueError("box bounds must be finite")
		return v

	@property
	def dim(self) -> int:
		return len(self.lo)
