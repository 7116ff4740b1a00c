"""Training sets of one-step samples (x_k, Γ_k, δ_k) -> x_{k+1}.

Samples are kept column-wise in numpy arrays; ``TrainingSet.samples`` gives the
row view. Model inputs are assembled as [x; Γ row-major; extras; δ].
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import ContractViolation
from flowmap.core.logging import log_event, timed
from flowmap.core.parallel import chunk_bounds, ordered_map
from flowmap.monitoring import metrics
from flowmap.schemas.base import Box
from flowmap.schemas.basis import BasisSpec
from flowmap.schemas.dataset import DatasetMeta, InputLayout, SamplingDomains
from flowmap.services.dynamics import AnySystem, SystemFamily, SystemSpec, Trajectory, check_step, rk4_increment
from flowmap.services.input_param import eval_local_batch, fit_local
from flowmap.services.signals import TimeSignal

logger = logging.getLogger(__name__)

# Samples per integration chunk; fixed so results never depend on the worker count
GENERATION_CHUNK = 2048


@dataclass(frozen=True)
class TrainingSample:
	x_in: np.ndarray
	gamma: np.ndarray
	delta: float
	x_out: np.ndarray
	extra: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class InputBatch:
	"""Sampled (x, Γ, extras, δ) draws; gamma has shape (J, input_arity, n_b)"""
	x: np.ndarray
	gamma: np.ndarray
	extra: np.ndarray
	delta: np.ndarray
	seed: Optional[int] = None
	domains: Optional[SamplingDomains] = None

	def __len__(self) -> int:
		return len(self.x)

	def __iter__(self) -> Iterator[Tuple[np.ndarray, np.ndarray, float]]:
		for j in range(len(self)):
			yield self.x[j], self.gamma[j], float(self.delta[j])

	def take(self, idx: Union[range, np.ndarray]) -> "InputBatch":
		idx = np.asarray(idx)
		return replace(self, x=self.x[idx], gamma=self.gamma[idx], extra=self.extra[idx], delta=self.delta[idx])


@dataclass
class TrainingSet:
	layout: InputLayout
	x_in: np.ndarray
	gamma: np.ndarray
	extra: np.ndarray
	delta: np.ndarray
	x_out: np.ndarray
	meta: DatasetMeta
	seed: Optional[int] = None
	domains: Optional[SamplingDomains] = None

	def __post_init__(self):
		J = len(self.x_in)
		if J < 1:
			raise ContractViolation("samples: a training set needs at least one sample")
		lay = self.layout
		expected = {
			"x_in": (J, lay.d),
			"gamma": (J, lay.n_gamma),
			"extra": (J, lay.n_extra),
			"delta": (J,),
			"x_out": (J, lay.d),
		}
		for name, shape in expected.items():
			value = np.asarray(getattr(self, name), dtype=float)
			if value.shape != shape:
				raise ContractViolation(f"{name}: expected shape {shape}, got {value.shape}")
			setattr(self, name, value)

	def __len__(self) -> int:
		return len(self.x_in)

	@property
	def samples(self) -> List[TrainingSample]:
		lay = self.layout
		return [
			TrainingSample(
				x_in=self.x_in[j],
				gamma=self.gamma[j].reshape(lay.input_arity, lay.n_b),
				delta=float(self.delta[j]),
				x_out=self.x_out[j],
				extra=self.extra[j],
			)
			for j in range(len(self))
		]

	def inputs(self) -> np.ndarray:
		"""(J, m) matrix of assembled model inputs"""
		return assemble_inputs(self.layout, self.x_in, self.gamma, self.extra, self.delta)

	@property
	def coverage(self) -> Box:
		X = self.inputs()
		return Box(lo=X.min(axis=0).tolist(), hi=X.max(axis=0).tolist())

	def subset(self, idx: Union[Sequence[int], np.ndarray]) -> "TrainingSet":
		idx = np.asarray(idx, dtype=int)
		return replace(
			self,
			x_in=self.x_in[idx],
			gamma=self.gamma[idx],
			extra=self.extra[idx],
			delta=self.delta[idx],
			x_out=self.x_out[idx],
		)


# =====================================
# Input assembly
# =====================================

def assemble_inputs(
		layout: InputLayout,
		x: np.ndarray,
		gamma: np.ndarray,
		extra: Optional[np.ndarray],
		delta: Union[float, np.ndarray],
) -> np.ndarray:
	"""Batched [x; Γ row-major; extras; δ]; every argument carries a leading sample axis"""
	x = np.atleast_2d(np.asarray(x, dtype=float))
	J = len(x)
	gamma = np.asarray(gamma, dtype=float).reshape(J, -1)
	extra = np.zeros((J, 0)) if extra is None else np.asarray(extra, dtype=float).reshape(J, -1)
	parts = [x, gamma, extra]
	if layout.include_delta:
		parts.append(np.broadcast_to(np.asarray(delta, dtype=float), (J,))[:, None])
	for name, part, width in (("x", x, layout.d), ("gamma", gamma, layout.n_gamma), ("extra", extra, layout.n_extra)):
		if part.shape[1] != width:
			raise ContractViolation(f"{name}: expected {width} entries per sample, got {part.shape[1]}")
	return np.concatenate(parts, axis=1)


def assemble_input(
		layout: InputLayout,
		x: Sequence[float],
		gamma: np.ndarray,
		delta: float,
		extra: Optional[Sequence[float]] = None,
) -> np.ndarray:
	gamma = np.asarray(gamma, dtype=float)
	if gamma.size != layout.n_gamma:
		raise ContractViolation(f"gamma: expected {layout.input_arity}x{layout.n_b} coefficients, got shape {gamma.shape}")
	if len(x) != layout.d:
		raise ContractViolation(f"x: expected {layout.d} entries, got {len(x)}")
	return assemble_inputs(layout, np.asarray(x, dtype=float)[None, :], gamma[None], None if extra is None else [extra], delta)[0]


def layout_for(
		system: AnySystem,
		basis: BasisSpec,
		include_delta: bool = True,
		fixed_delta: Optional[float] = None,
) -> InputLayout:
	extra_names = list(system.extra_names) if isinstance(system, SystemFamily) else []
	return InputLayout(
		d=system.d,
		input_arity=system.input_arity,
		n_b=basis.n_b,
		extra_names=extra_names,
		include_delta=include_delta,
		fixed_delta=fixed_delta,
	)


# =====================================
# Sampling
# =====================================

def sample_inputs(domains: SamplingDomains, J: int, seed: Optional[int] = None) -> InputBatch:
	"""J independent uniform draws; draw j comes from its own counter-derived stream"""
	if J < 1:
		raise ContractViolation(f"J: must be >= 1, got {J}")
	if seed is None:
		seed = int(np.random.SeedSequence().entropy)
	bounds = np.array(
		list(domains.I_x)
		+ [iv for row in domains.I_Gamma for iv in row]
		+ list(domains.extra_params.values())
		+ [domains.I_Delta],
		dtype=float,
	)
	lo, width = bounds[:, 0], bounds[:, 1] - bounds[:, 0]
	u = np.empty((J, len(bounds)))
	for j in range(J):
		u[j] = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,))).random(len(bounds))
	draws = lo + width * u

	d, arity, n_b, n_extra = domains.d, domains.input_arity, domains.n_b, len(domains.extra_params)
	cut = np.cumsum([d, arity * n_b, n_extra])
	return InputBatch(
		x=draws[:, :cut[0]],
		gamma=draws[:, cut[0]:cut[1]].reshape(J, arity, n_b),
		extra=draws[:, cut[1]:cut[2]],
		delta=draws[:, cut[2]],
		seed=seed,
		domains=domains,
	)


# =====================================
# Reference integration of the modified local system
# =====================================

def substeps_for(system: AnySystem, max_delta: float, micro_steps: int, extras: Optional[np.ndarray] = None) -> int:
	"""micro_steps, raised when needed so δ / n stays inside the system's stability guard"""
	if micro_steps < 1:
		raise ContractViolation(f"micro_steps: must be >= 1, got {micro_steps}")
	if isinstance(system, SystemFamily):
		probe = system.bind(extras[0]) if extras is not None and len(extras) else None
		max_step = probe.max_step if probe is not None else None
	else:
		max_step = system.max_step
	if max_step is None:
		return micro_steps
	return max(micro_steps, math.ceil(max_delta / max_step * (1 + 1e-12)))


def propagate_local(
		system: SystemSpec,
		x: np.ndarray,
		coeffs: np.ndarray,
		deltas: np.ndarray,
		basis: BasisSpec,
		n_sub: int,
) -> np.ndarray:
	"""Integrate dx/dτ = f(x, γ̃(τ; Γ)) over [0, δ] for a batch; non-finite rows are left as they end up"""
	h = deltas / n_sub
	check_step(system, h)

	def signal(tau):
		return eval_local_batch(coeffs, deltas, basis, tau)

	state = np.array(x, dtype=float)
	with np.errstate(over="ignore", invalid="ignore"):
		for i in range(n_sub):
			state = rk4_increment(system, state, i * h, h, signal)
	return state


def generate_pairs(
		system: AnySystem,
		inputs: InputBatch,
		basis: BasisSpec,
		micro_steps: Optional[int] = None,
		include_delta: bool = True,
		workers: Optional[int] = None,
) -> TrainingSet:
	micro_steps = settings.REFERENCE_MICRO_STEPS if micro_steps is None else micro_steps
	J = len(inputs)
	if J < 1:
		raise ContractViolation("inputs: need at least one draw")
	if inputs.x.shape[1] != system.d:
		raise ContractViolation(f"inputs: states have {inputs.x.shape[1]} entries, system {system.name} has d={system.d}")
	if system.input_arity == 0 and inputs.gamma.size == 0:
		inputs = replace(inputs, gamma=np.zeros((J, 0, basis.n_b)))
	if inputs.gamma.shape[1:] != (system.input_arity, basis.n_b):
		raise ContractViolation(
			f"inputs: Γ has shape {inputs.gamma.shape[1:]}, expected ({system.input_arity}, {basis.n_b})"
		)
	is_family = isinstance(system, SystemFamily)
	if is_family and inputs.extra.shape[1] != len(system.extra_names):
		raise ContractViolation(f"inputs: {system.name} needs extras {system.extra_names}")

	fixed_delta = None
	if not include_delta:
		if np.ptp(inputs.delta) > 0:
			raise ContractViolation("include_delta: a fixed-delta layout needs a degenerate I_Delta")
		fixed_delta = float(inputs.delta[0])
	layout = layout_for(system, basis, include_delta, fixed_delta)
	n_sub = substeps_for(system, float(np.max(inputs.delta)), micro_steps, inputs.extra)
	if n_sub != micro_steps:
		log_event(logger, "micro steps raised for stability", requested=micro_steps, used=n_sub, system=system.name)

	def run_chunk(idx: range) -> np.ndarray:
		part = inputs.take(idx)
		target = system.bind(part.extra) if is_family else system
		return propagate_local(target, part.x, part.gamma, part.delta, basis, n_sub)

	with timed(logger, "generate_pairs", system=system.name, samples=J):
		x_out = np.concatenate(ordered_map(run_chunk, chunk_bounds(J, GENERATION_CHUNK), workers))

	ok = np.all(np.isfinite(x_out), axis=1)
	dropped = int(J - ok.sum())
	if dropped:
		metrics.samples_dropped.inc(dropped)
		log_event(logger, "samples dropped after integrator overflow", level=logging.WARNING, dropped=dropped, total=J)
	if not ok.any():
		raise ContractViolation(f"inputs: all {J} samples overflowed for system {system.name}")
	metrics.samples_generated.inc(int(ok.sum()))

	kept = inputs.take(np.flatnonzero(ok))
	return TrainingSet(
		layout=layout,
		x_in=kept.x,
		gamma=kept.gamma.reshape(len(kept), -1),
		extra=kept.extra,
		delta=kept.delta,
		x_out=x_out[ok],
		meta=DatasetMeta(system=system.name, basis=basis, micro_steps=n_sub, source="sampled", dropped=dropped),
		seed=inputs.seed,
		domains=inputs.domains,
	)


# =====================================
# Pairs from observed trajectories
# =====================================

@dataclass(frozen=True)
class TrajectoryRecord:
	trajectory: Trajectory
	signal: TimeSignal
	extras: Optional[Sequence[float]] = None


def pairs_from_trajectories(
		trajs: Sequence[Union[TrajectoryRecord, Tuple[Trajectory, TimeSignal]]],
		basis: BasisSpec,
		system_name: str = "trajectories",
		max_pairs: Optional[int] = None,
		seed: Optional[int] = None,
		include_delta: bool = True,
) -> TrainingSet:
	"""Every adjacent (t_k, t_{k+1}) pair becomes a sample: K_tot = Σ K_i - N_T"""
	if not trajs:
		raise ContractViolation("trajs: need at least one trajectory")
	records = [t if isinstance(t, TrajectoryRecord) else TrajectoryRecord(*t) for t in trajs]
	for i, rec in enumerate(records):
		if len(rec.trajectory) < 2:
			raise ContractViolation(f"trajs[{i}]: trajectory has {len(rec.trajectory)} point(s), need at least 2")
	first = records[0]
	d, arity = first.trajectory.d, first.signal.input_arity
	n_extra = len(first.extras or [])

	x_in, x_out, gammas, deltas, extras = [], [], [], [], []
	for i, rec in enumerate(records):
		traj = rec.trajectory
		if traj.d != d or rec.signal.input_arity != arity or len(rec.extras or []) != n_extra:
			raise ContractViolation(f"trajs[{i}]: dimensions differ from trajs[0]")
		for k in range(len(traj) - 1):
			delta = float(traj.times[k + 1] - traj.times[k])
			gammas.append(fit_local(basis, rec.signal, float(traj.times[k]), delta).gamma)
			deltas.append(delta)
		x_in.append(traj.states[:-1])
		x_out.append(traj.states[1:])
		extras.append(np.tile(np.asarray(rec.extras or [], dtype=float), (len(traj) - 1, 1)))

	deltas = np.asarray(deltas)
	fixed_delta = None
	if not include_delta:
		if np.ptp(deltas) > 1e-12 * np.max(deltas):
			raise ContractViolation("include_delta: trajectories are not uniformly sampled")
		fixed_delta = float(deltas[0])
	layout = InputLayout(
		d=d,
		input_arity=arity,
		n_b=basis.n_b,
		extra_names=[f"p_{i}" for i in range(n_extra)],
		include_delta=include_delta,
		fixed_delta=fixed_delta,
	)
	dataset = TrainingSet(
		layout=layout,
		x_in=np.concatenate(x_in),
		gamma=np.asarray(gammas).reshape(len(gammas), -1),
		extra=np.concatenate(extras).reshape(len(gammas), n_extra),
		delta=deltas,
		x_out=np.concatenate(x_out),
		meta=DatasetMeta(system=system_name, basis=basis, micro_steps=0, source="trajectories"),
		seed=seed,
	)
	log_event(logger, "trajectory pairs assembled", trajectories=len(records), pairs=len(dataset))

	if max_pairs is not None and max_pairs < len(dataset):
		if max_pairs < 1:
			raise ContractViolation(f"max_pairs: must be >= 1, got {max_pairs}")
		keep = np.sort(np.random.default_rng(seed).choice(len(dataset), size=max_pairs, replace=False))
		dataset = dataset.subset(keep)
	metrics.samples_generated.inc(len(dataset))
	return dataset


def noise_inject(dataset: TrainingSet, std: float, seed: Optional[int] = None) -> TrainingSet:
	"""Zero-mean Gaussian perturbation of x_in and x_out, as measured data would carry"""
	if std < 0:
		raise ContractViolation(f"std: must be >= 0, got {std}")
	if std == 0:
		return dataset
	rng = np.random.default_rng(seed)
	noise_in = rng.normal(0.0, std, size=dataset.x_in.shape)
	noise_out = rng.normal(0.0, std, size=dataset.x_out.shape)
	return replace(
		dataset,
		x_in=dataset.x_in + noise_in,
		x_out=dataset.x_out + noise_out,
		meta=dataset.meta.model_copy(update={"noise_std": float(std)}),
	)
