from typing import Tuple

from pydantic import ConfigDict, Field, field_validator

from flowmap.schemas.base import BaseSchema


class TrainConfig(BaseSchema):
	epochs: int = Field(500, ge=0)
	batch_size: int = Field(256, ge=1)
	learning_rate: float = Field(1e-3, gt=0)
	adam_betas: Tuple[float, float] = (0.9, 0.999)
	adam_eps: float = Field(1e-8, gt=0)
	seed: int = 0
	validation_fraction: float = Field(0.1, ge=0, lt=1)
	# Map model inputs to [-1, 1] with the dataset's domain box
	normalize_inputs: bool = True

	@field_validator("adam_betas")
	@classmethod
	def _betas(cls, v: Tuple[float, float]) -> Tuple[float, float]:
		if not all(0 <= b < 1 for b in v):
			raise ValueError(f"adam betas must lie in [0, 1), got {v}")
		return v

	model_config = ConfigDict(
		extra="forbid",
		json_schema_extra={
			"example": {
				"epochs": 500,
				"batch_size": 256,
				"learning_rate": 1e-3,
				"adam_betas": [0.9, 0.999],
				"adam_eps": 1e-8,
				"seed": 0,
				"validation_fraction": 0.1,
			}
		},
	)
