"""Recursive multi-step prediction with any one-step model, and trajectory comparison."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import ContractViolation, NumericalError
from flowmap.core.logging import log_event, timed
from flowmap.monitoring import metrics
from flowmap.schemas.base import Box
from flowmap.schemas.basis import BasisSpec
from flowmap.schemas.dataset import InputLayout
from flowmap.schemas.model import ModelMeta
from flowmap.services.dataset import assemble_inputs, layout_for, propagate_local, substeps_for
from flowmap.services.dynamics import AnySystem, SystemFamily, Trajectory
from flowmap.services.flownet import NetParams, model_forward
from flowmap.services.input_param import PiecewiseInput, fit_piecewise
from flowmap.services.poly_model import PolyModel, poly_forward
from flowmap.services.signals import TimeSignal

logger = logging.getLogger(__name__)

COVERAGE_TOLERANCE = 1e-9
RELATIVE_FLOOR = 1e-12


# =====================================
# One-step models
# =====================================

class OneStepModel(ABC):
	"""(x, Γ, extras, δ) -> x_next with the Î residual structure"""
	kind: str = "abstract"
	layout: InputLayout
	basis: BasisSpec
	coverage: Optional[Box] = None

	@abstractmethod
	def step(self, X_in: np.ndarray) -> np.ndarray:
		"""Assembled inputs of shape (B, m) to next states of shape (B, d)."""


class NetworkModel(OneStepModel):
	kind = "network"

	def __init__(self, params: NetParams, meta: ModelMeta):
		if params.m != meta.layout.m or params.d != meta.layout.d:
			raise ContractViolation(f"params: network shape {params.layer_sizes} does not match layout m={meta.layout.m}")
		self.params = params
		self.meta = meta
		self.layout = meta.layout
		self.basis = meta.basis
		self.coverage = meta.coverage

	def step(self, X_in: np.ndarray) -> np.ndarray:
		return model_forward(self.params, X_in)


class PolynomialModel(OneStepModel):
	kind = "polynomial"

	def __init__(self, model: PolyModel, meta: ModelMeta):
		if model.dim != meta.layout.m:
			raise ContractViolation(f"model: polynomial input dimension {model.dim} does not match layout m={meta.layout.m}")
		self.model = model
		self.meta = meta
		self.layout = meta.layout
		self.basis = meta.basis
		self.coverage = meta.coverage or model.domain_box

	def step(self, X_in: np.ndarray) -> np.ndarray:
		return poly_forward(self.model, X_in)


def decode_inputs(layout: InputLayout, X_in: np.ndarray):
	"""Split assembled inputs back into (x, Γ (B, arity, n_b), extras, δ)"""
	X = np.atleast_2d(X_in)
	cut = np.cumsum([layout.d, layout.n_gamma, layout.n_extra])
	delta = X[:, cut[2]] if layout.include_delta else np.full(len(X), layout.fixed_delta)
	gamma = X[:, cut[0]:cut[1]].reshape(len(X), layout.input_arity, layout.n_b)
	return X[:, :cut[0]], gamma, X[:, cut[1]:cut[2]], delta


class OracleModel(OneStepModel):
	"""Exact increment: RK4 micro-integration of the modified local system"""
	kind = "oracle"

	def __init__(
			self,
			system: AnySystem,
			basis: BasisSpec,
			micro_steps: Optional[int] = None,
			include_delta: bool = True,
			fixed_delta: Optional[float] = None,
	):
		self.system = system
		self.basis = basis
		self.micro_steps = settings.REFERENCE_MICRO_STEPS if micro_steps is None else micro_steps
		self.layout = layout_for(system, basis, include_delta, fixed_delta)

	def step(self, X_in: np.ndarray) -> np.ndarray:
		single = np.ndim(X_in) == 1
		x, gamma, extra, delta = decode_inputs(self.layout, np.asarray(X_in, dtype=float))
		target = self.system.bind(extra) if isinstance(self.system, SystemFamily) else self.system
		n_sub = substeps_for(self.system, float(np.max(delta)), self.micro_steps, extra)
		out = propagate_local(target, x, gamma, delta, self.basis, n_sub)
		return out[0] if single else out


# =====================================
# Prediction
# =====================================

@dataclass
class PredictionRun:
	x0: np.ndarray
	grid: np.ndarray
	predicted: Trajectory
	fitted_inputs: Optional[PiecewiseInput]
	# Step indices whose model input left the training coverage box
	out_of_domain: List[int] = field(default_factory=list)
	failure_index: Optional[int] = None
	extras: np.ndarray = field(default_factory=lambda: np.zeros(0))

	@property
	def truncated(self) -> bool:
		return self.failure_index is not None


def uniform_grid(t_end: float, delta: float, t0: float = 0.0) -> np.ndarray:
	if not delta > 0 or not t_end > t0:
		raise ContractViolation(f"grid: need delta > 0 and t_end > t0, got delta={delta}, t0={t0}, t_end={t_end}")
	n = int(round((t_end - t0) / delta))
	if n < 1 or not math.isclose(t0 + n * delta, t_end, rel_tol=1e-9, abs_tol=1e-12):
		raise ContractViolation(f"grid: t_end - t0 = {t_end - t0} is not a multiple of delta = {delta}")
	grid = t0 + delta * np.arange(n + 1)
	grid[-1] = t_end
	return grid


def _extras_vector(layout: InputLayout, extras: Union[None, Mapping[str, float], Sequence[float]]) -> np.ndarray:
	if isinstance(extras, Mapping):
		missing = [n for n in layout.extra_names if n not in extras]
		if missing:
			raise ContractViolation(f"extras: missing {missing}")
		extras = [extras[n] for n in layout.extra_names]
	values = np.asarray([] if extras is None else extras, dtype=float).reshape(-1)
	if len(values) != layout.n_extra:
		raise ContractViolation(f"extras: expected {layout.n_extra} values {layout.extra_names}, got {len(values)}")
	return values


def _outside(box: Optional[Box], X: np.ndarray) -> bool:
	if box is None:
		return False
	lo, hi = np.asarray(box.lo), np.asarray(box.hi)
	slack = COVERAGE_TOLERANCE * np.maximum(1.0, hi - lo)
	return bool(np.any(X < lo - slack) or np.any(X > hi + slack))


def predict(
		model: OneStepModel,
		x0: Sequence[float],
		signal: Optional[TimeSignal],
		grid: Sequence[float],
		extras: Union[None, Mapping[str, float], Sequence[float]] = None,
		basis: Optional[BasisSpec] = None,
) -> PredictionRun:
	layout = model.layout
	if basis is not None and basis != model.basis:
		raise ContractViolation(f"basis: model was trained with {model.basis}, got {basis}")
	grid = np.asarray(grid, dtype=float)
	if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
		raise ContractViolation("grid: need at least two strictly increasing times")
	x0 = np.asarray(x0, dtype=float).reshape(-1)
	if len(x0) != layout.d:
		raise ContractViolation(f"x0: expected {layout.d} entries, got {len(x0)}")
	deltas = np.diff(grid)
	if not layout.include_delta and not np.allclose(deltas, layout.fixed_delta, rtol=1e-9, atol=0):
		raise ContractViolation(f"grid: the model was trained for the fixed step {layout.fixed_delta}")
	extra = _extras_vector(layout, extras)

	if layout.input_arity:
		if signal is None or signal.input_arity != layout.input_arity:
			raise ContractViolation(f"signal: the model expects {layout.input_arity} input channel(s)")
		fitted = fit_piecewise(signal, grid, model.basis)
		gammas = fitted.gammas
	else:
		fitted = None
		gammas = np.zeros((len(deltas), 0))

	states = np.empty((len(grid), layout.d))
	states[0] = x0
	out_of_domain: List[int] = []
	failure_index: Optional[int] = None
	with timed(logger, "predict", model=model.kind, steps=len(deltas)):
		for n in range(len(deltas)):
			X = assemble_inputs(layout, states[n][None, :], gammas[n][None, :], extra[None, :], deltas[n])
			if _outside(model.coverage, X):
				out_of_domain.append(n)
			try:
				with np.errstate(over="ignore", invalid="ignore"):
					x_next = np.asarray(model.step(X), dtype=float).reshape(-1)
			except NumericalError:
				x_next = np.full(layout.d, np.nan)
			if not np.all(np.isfinite(x_next)):
				failure_index = n + 1
				break
			states[n + 1] = x_next

	n_done = len(grid) if failure_index is None else failure_index
	metrics.rollout_steps.inc(n_done - 1)
	if out_of_domain:
		metrics.rollout_out_of_domain.inc(len(out_of_domain))
		log_event(
			logger, "prediction inputs outside the training domain", level=logging.WARNING,
			steps=len(out_of_domain), first_step=out_of_domain[0],
		)
	if failure_index is not None:
		log_event(
			logger, "prediction truncated at non-finite state", level=logging.WARNING,
			failure_index=failure_index, t=float(grid[failure_index]),
		)
	return PredictionRun(
		x0=x0,
		grid=grid,
		predicted=Trajectory(times=grid[:n_done], states=states[:n_done]),
		fitted_inputs=fitted,
		out_of_domain=out_of_domain,
		failure_index=failure_index,
		extras=extra,
	)


# =====================================
# Comparison
# =====================================

@dataclass
class Comparison:
	abs_error: np.ndarray
	linf_per_coord: np.ndarray
	linf: float
	rel_linf: float
	terminal_error: float
	# Relative Euclidean error of the state vector, at the last time and the worst time
	rel_l2_terminal: float
	rel_l2_max: float

	def to_dict(self) -> Dict[str, Any]:
		return {
			"linf": self.linf,
			"rel_linf": self.rel_linf,
			"terminal_error": self.terminal_error,
			"rel_l2_terminal": self.rel_l2_terminal,
			"rel_l2_max": self.rel_l2_max,
			"linf_per_coord": self.linf_per_coord.tolist(),
		}


def compare(pred: Trajectory, ref: Trajectory) -> Comparison:
	if len(pred) != len(ref) or not np.allclose(pred.times, ref.times, rtol=0, atol=1e-12):
		raise ContractViolation("ref: time grids of the two trajectories differ")
	if pred.d != ref.d:
		raise ContractViolation(f"ref: state dimension {ref.d} differs from {pred.d}")
	err = np.abs(pred.states - ref.states)
	linf = float(np.max(err))
	ref_scale = max(float(np.max(np.abs(ref.states))), RELATIVE_FLOOR)
	l2_err = np.linalg.norm(pred.states - ref.states, axis=1)
	l2_ref = np.maximum(np.linalg.norm(ref.states, axis=1), RELATIVE_FLOOR)
	return Comparison(
		abs_error=err,
		linf_per_coord=err.max(axis=0),
		linf=linf,
		rel_linf=linf / ref_scale,
		terminal_error=float(np.max(err[-1])),
		rel_l2_terminal=float(l2_err[-1] / l2_ref[-1]),
		rel_l2_max=float(np.max(l2_err / l2_ref)),
	)
