from typing import Literal, Optional

from flowmap.schemas.base import BaseSchema, Box
from flowmap.schemas.basis import BasisSpec
from flowmap.schemas.dataset import InputLayout


class ModelMeta(BaseSchema):
	"""Training metadata every one-step model carries into prediction"""
	system: str
	layout: InputLayout
	basis: BasisSpec
	micro_steps: int
	coverage: Optional[Box] = None
	dataset_size: int = 0
	seed: Optional[int] = None


class NetworkHeader(BaseSchema):
	format: Literal["flowmap-network"] = "flowmap-network"
	version: str
	layer_sizes: list[int]
	activation: Literal["tanh"] = "tanh"
	meta: ModelMeta
	normalization: Optional[Box] = None


class PolynomialHeader(BaseSchema):
	format: Literal["flowmap-polynomial"] = "flowmap-polynomial"
	version: str
	dim: int
	degree: int
	n_terms: int
	domain_box: Box
	meta: ModelMeta
	regression: Literal["lstsq-svd"] = "lstsq-svd"
	rcond: float
	effective_rank: int
	residual: float
