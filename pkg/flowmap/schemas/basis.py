from enum import Enum
from typing import Optional

from pydantic import Field, model_validator

from flowmap.schemas.base import FrozenSchema


class BasisKind(str, Enum):
	TAYLOR = "taylor"
	LAGRANGE = "lagrange"
	LEGENDRE = "legendre"


class BasisSpec(FrozenSchema):
	kind: BasisKind
	degree: int = Field(..., ge=0)
	# Gauss-Legendre points for the L2 projection; defaults to degree + 3
	quad_order: Optional[int] = None

	@model_validator(mode="after")
	def _check_quadrature(self) -> "BasisSpec":
		if self.quad_order is not None and self.quad_order < self.degree + 1:
			raise ValueError(f"quad_order must be >= degree + 1 = {self.degree + 1}, got {self.quad_order}")
		return self

	@property
	def n_b(self) -> int:
		return self.degree + 1

	@property
	def quadrature_points(self) -> int:
		return self.quad_order if self.quad_order is not None else self.degree + 3
