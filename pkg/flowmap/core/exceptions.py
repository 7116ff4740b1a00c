"""Error hierarchy shared by every flowmap service.

Each error carries a human readable ``detail`` and the process ``exit_code``
the command line returns for it: 1 for numeric failures, 2 for usage and
configuration problems.
"""
from typing import Any, Dict, Optional

import numpy as np

EXIT_NUMERIC = 1
EXIT_USAGE = 2


class FlowmapError(Exception):
	exit_code: int = EXIT_NUMERIC

	def __init__(self, detail: str, **context: Any):
		super().__init__(detail)
		self.detail = detail
		self.context: Dict[str, Any] = context

	def to_dict(self) -> Dict[str, Any]:
		payload = {"error": type(self).__name__, "detail": self.detail}
		for key, value in self.context.items():
			payload[key] = value.tolist() if isinstance(value, np.ndarray) else value
		return payload


class ContractViolation(FlowmapError, ValueError):
	"""A precondition failed; the message names the offending argument."""
	exit_code = EXIT_USAGE


class DomainError(FlowmapError, ValueError):
	exit_code = EXIT_USAGE


class ConfigError(FlowmapError):
	exit_code = EXIT_USAGE


class CapacityError(FlowmapError):
	exit_code = EXIT_USAGE


class UnsupportedSystemError(FlowmapError):
	exit_code = EXIT_USAGE


class StabilityError(ContractViolation):
	pass


class FitError(FlowmapError):
	exit_code = EXIT_NUMERIC


class NumericalError(FlowmapError, ArithmeticError):
	exit_code = EXIT_NUMERIC


class NumericalOverflowError(NumericalError):
	def __init__(self, detail: str, t: float, x: Any, step_index: Optional[int] = None):
		super().__init__(detail, t=float(t), x=np.asarray(x), step_index=step_index)
		self.t = float(t)
		self.x = np.asarray(x)
		self.step_index = step_index

	def at_step(self, step_index: int) -> "NumericalOverflowError":
		return NumericalOverflowError(
			f"{self.detail} (step {step_index})", t=self.t, x=self.x, step_index=step_index
		)


class TrainingDivergedError(NumericalError):
	def __init__(self, detail: str, epoch: int, batch: int):
		super().__init__(detail, epoch=epoch, batch=batch)
		self.epoch = epoch
		self.batch = batch
