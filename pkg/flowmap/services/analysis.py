"""Closed-form error bounds and the empirical checks that verify them.

Calculators are pure functions of nonnegative constants. The degenerate
L_phi = 1 and L1·Δ = 0 cases are defined by continuity as n·E.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, List, Optional, Sequence

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import ContractViolation, UnsupportedSystemError
from flowmap.core.logging import log_event, timed
from flowmap.monitoring import metrics
from flowmap.schemas.analysis import BoundInputs, BoundRow, GronwallReport, RolloutBoundReport
from flowmap.schemas.base import Box
from flowmap.schemas.basis import BasisSpec
from flowmap.schemas.dataset import SamplingDomains
from flowmap.services.dataset import assemble_inputs, sample_inputs
from flowmap.services.dynamics import Lipschitz, SystemSpec, integrate, rk4_step
from flowmap.services.input_param import eval_local, fit_piecewise, sup_error
from flowmap.services.rollout import OneStepModel, uniform_grid
from flowmap.services.signals import TimeSignal

logger = logging.getLogger(__name__)

StepMap = Callable[[np.ndarray], np.ndarray]

# Integrator noise allowance when comparing a measured gap with a bound
CHECK_ATOL = 1e-10
SUP_SAMPLES_PER_SEGMENT = 201


def _nonnegative(**values: float) -> None:
	for name, value in values.items():
		if not value >= 0:
			raise ContractViolation(f"{name}: must be >= 0, got {value}")


# =====================================
# Calculators
# =====================================

def input_bound(L1: float, L2: float, eta: float, t: float) -> float:
	"""L2·η·t·e^{L1·t}"""
	_nonnegative(L1=L1, L2=L2, eta=eta, t=t)
	if eta == 0 or L2 == 0 or t == 0:
		return 0.0
	return L2 * eta * t * math.exp(L1 * t)


def rollout_bound(L_phi: float, E: float, n: int) -> float:
	"""Σ_{i<n} L_phi^i · E = (1 - L_phi^n)/(1 - L_phi)·E"""
	_nonnegative(L_phi=L_phi, E=E, n=n)
	if n == 0 or E == 0:
		return 0.0
	if L_phi == 1.0:
		return n * E
	return (1.0 - L_phi ** n) / (1.0 - L_phi) * E


def combined_bound(inputs: BoundInputs) -> float:
	return input_bound(inputs.L1, inputs.L2, inputs.eta, inputs.t) + rollout_bound(inputs.L_phi, inputs.E, inputs.n)


def appendix_bound(L1: float, Delta: float, n: int, E: float) -> float:
	"""(e^{n·L1·Δ} - 1)/(e^{L1·Δ} - 1)·E"""
	_nonnegative(L1=L1, Delta=Delta, n=n, E=E)
	a = L1 * Delta
	if n == 0 or E == 0:
		return 0.0
	if a == 0:
		return n * E
	return math.expm1(n * a) / math.expm1(a) * E


def appendix_bound_variable(L1: float, deltas: Sequence[float], E: float) -> float:
	"""E·(1 + e^{L1 δ_{n-1}} + e^{L1 (δ_{n-1} + δ_{n-2})} + ...) over the n steps of a non-uniform grid"""
	deltas = np.asarray(deltas, dtype=float)
	_nonnegative(L1=L1, E=E)
	if np.any(deltas < 0):
		raise ContractViolation("deltas: steps must be >= 0")
	if len(deltas) == 0 or E == 0:
		return 0.0
	tails = np.concatenate([[0.0], np.cumsum(deltas[::-1])[:-1]])
	return float(E * np.sum(np.exp(L1 * tails)))


def bound_curve(inputs: BoundInputs, times: Sequence[float]) -> List[float]:
	"""combined_bound at (t_n - t_0, n) for every point of a time grid"""
	times = np.asarray(times, dtype=float)
	return [
		combined_bound(inputs.model_copy(update={"t": float(t - times[0]), "n": n}))
		for n, t in enumerate(times)
	]


def bound_row(inputs: BoundInputs) -> BoundRow:
	return BoundRow(
		inputs=inputs,
		input_bound=input_bound(inputs.L1, inputs.L2, inputs.eta, inputs.t),
		rollout_bound=rollout_bound(inputs.L_phi, inputs.E, inputs.n),
		combined_bound=combined_bound(inputs),
		appendix_bound=appendix_bound(inputs.L1, inputs.delta, inputs.n, inputs.E),
	)


# =====================================
# Empirical checks
# =====================================

def _record(check: str, satisfied: bool) -> None:
	metrics.bound_checks.labels(check=check, result="pass" if satisfied else "fail").inc()


def check_gronwall(
		system: SystemSpec,
		signal: TimeSignal,
		basis: BasisSpec,
		T: float,
		delta: float,
		micro_steps: Optional[int] = None,
		lipschitz: Optional[Lipschitz] = None,
		x0: Optional[Sequence[float]] = None,
) -> GronwallReport:
	"""Integrate the system under γ and under its piecewise fit γ̃; the gap must stay under L2·η·t·e^{L1 t}"""
	micro_steps = settings.REFERENCE_MICRO_STEPS if micro_steps is None else micro_steps
	lipschitz = lipschitz or system.lipschitz_over(signal, 0.0, T)
	if lipschitz is None:
		raise UnsupportedSystemError(f"system {system.name} provides no Lipschitz constants for the Gronwall check")
	x0 = np.zeros(system.d) if x0 is None else np.asarray(x0, dtype=float)

	breakpoints = uniform_grid(T, delta)
	with timed(logger, "check_gronwall", system=system.name, steps=len(breakpoints) - 1):
		fitted = fit_piecewise(signal, breakpoints, basis)
		eta = sup_error(signal, fitted, SUP_SAMPLES_PER_SEGMENT)
		n_seg = len(breakpoints) - 1
		reference = integrate(system, x0, 0.0, T, n_seg * micro_steps, signal)

		modified = np.empty_like(reference.states)
		modified[0] = x0
		for n, seg in enumerate(fitted.segments):
			t_n = breakpoints[n]

			def local_signal(t, seg=seg, t_n=t_n):
				return eval_local(seg, np.asarray(t) - t_n)

			for i in range(micro_steps):
				k = n * micro_steps + i
				modified[k + 1] = rk4_step(system, modified[k], reference.times[k], reference.times[k + 1] - reference.times[k], local_signal)

	times = reference.times
	measured = np.linalg.norm(reference.states - modified, axis=1)
	bound = np.array([input_bound(lipschitz.L1, lipschitz.L2, eta, float(t)) for t in times])
	satisfied = bool(np.all(measured <= bound + CHECK_ATOL))
	nonzero = bound > 0
	max_ratio = float(np.max(measured[nonzero] / bound[nonzero])) if nonzero.any() else 0.0
	_record("gronwall", satisfied)
	log_event(
		logger, "gronwall check", level=logging.INFO if satisfied else logging.WARNING,
		system=system.name, eta=eta, satisfied=satisfied, max_ratio=max_ratio,
	)
	return GronwallReport(
		system=system.name,
		basis=basis.kind.value,
		degree=basis.degree,
		delta=delta,
		L1=lipschitz.L1,
		L2=lipschitz.L2,
		eta=eta,
		times=times.tolist(),
		measured=measured.tolist(),
		bound=bound.tolist(),
		satisfied=satisfied,
		max_ratio=max_ratio,
	)


def _pair_directions(rng: np.random.Generator, n: int, d: int, distance: float) -> np.ndarray:
	direction = rng.uniform(-1.0, 1.0, size=(n, d))
	scale = np.max(np.abs(direction), axis=1, keepdims=True)
	return distance * direction / np.where(scale > 0, scale, 1.0)


def estimate_lipschitz_phi(
		step_map: StepMap,
		box: Box,
		samples: Optional[int] = None,
		distance: Optional[float] = None,
		inflation: Optional[float] = None,
		seed: Optional[int] = 0,
) -> float:
	"""max ‖Φ(x) - Φ(y)‖∞ / ‖x - y‖∞ over random nearby pairs in ``box``, inflated"""
	samples = samples or settings.LIPSCHITZ_SAMPLES
	distance = distance or settings.LIPSCHITZ_PAIR_DISTANCE
	inflation = inflation or settings.LIPSCHITZ_INFLATION
	rng = np.random.default_rng(seed)
	lo, hi = np.asarray(box.lo), np.asarray(box.hi)
	x = lo + (hi - lo) * rng.random((samples, box.dim))
	y = x + _pair_directions(rng, samples, box.dim, distance)
	ratio = np.max(np.abs(step_map(x) - step_map(y)), axis=1) / np.max(np.abs(x - y), axis=1)
	return float(np.max(ratio) * inflation)


def estimate_lipschitz_model(
		model: OneStepModel,
		domains: SamplingDomains,
		samples: Optional[int] = None,
		distance: Optional[float] = None,
		inflation: Optional[float] = None,
		seed: int = 0,
) -> float:
	"""State Lipschitz constant of x -> model(x, Γ, δ), maximized over sampled (Γ, δ, extras) as well"""
	samples = samples or settings.LIPSCHITZ_SAMPLES
	distance = distance or settings.LIPSCHITZ_PAIR_DISTANCE
	inflation = inflation or settings.LIPSCHITZ_INFLATION
	draws = sample_inputs(domains, samples, seed)
	layout = model.layout
	y = draws.x + _pair_directions(np.random.default_rng([seed, 1]), samples, layout.d, distance)
	X = assemble_inputs(layout, draws.x, draws.gamma, draws.extra, draws.delta)
	Y = assemble_inputs(layout, y, draws.gamma, draws.extra, draws.delta)
	ratio = np.max(np.abs(model.step(X) - model.step(Y)), axis=1) / np.max(np.abs(draws.x - y), axis=1)
	return float(np.max(ratio) * inflation)


def check_rollout_bound(
		step_map: StepMap,
		x0: Sequence[float],
		n: int,
		E: float,
		L_phi: Optional[float] = None,
		noise: str = "uniform",
		seed: Optional[int] = 0,
) -> RolloutBoundReport:
	"""Perturb an exact one-step map by |noise|∞ <= E per step; the drift must stay under the geometric bound"""
	if noise not in ("uniform", "aligned"):
		raise ContractViolation(f"noise: expected 'uniform' or 'aligned', got {noise!r}")
	_nonnegative(E=E, n=n)
	x0 = np.asarray(x0, dtype=float).reshape(1, -1)
	rng = np.random.default_rng(seed)

	exact = np.empty((n + 1, x0.shape[1]))
	perturbed = np.empty_like(exact)
	exact[0] = perturbed[0] = x0[0]
	for k in range(n):
		exact[k + 1] = step_map(exact[k][None, :])[0]
		kick = np.full(x0.shape[1], E) if noise == "aligned" else rng.uniform(-E, E, size=x0.shape[1])
		perturbed[k + 1] = step_map(perturbed[k][None, :])[0] + kick

	estimated = L_phi is None
	if estimated:
		pad = max(n * E, settings.LIPSCHITZ_PAIR_DISTANCE)
		box = Box(lo=(exact.min(axis=0) - pad).tolist(), hi=(exact.max(axis=0) + pad).tolist())
		L_phi = estimate_lipschitz_phi(step_map, box, seed=seed)

	measured = np.max(np.abs(perturbed - exact), axis=1)
	bound = np.array([rollout_bound(L_phi, E, k) for k in range(n + 1)])
	satisfied = bool(np.all(measured <= bound * (1 + 1e-9) + CHECK_ATOL * E))
	nonzero = bound > 0
	max_ratio = float(np.max(measured[nonzero] / bound[nonzero])) if nonzero.any() else 0.0
	_record("rollout", satisfied)
	log_event(
		logger, "rollout bound check", level=logging.INFO if satisfied else logging.WARNING,
		E=E, L_phi=L_phi, noise=noise, satisfied=satisfied, max_ratio=max_ratio,
	)
	return RolloutBoundReport(
		noise=noise,
		E=E,
		L_phi=L_phi,
		L_phi_estimated=estimated,
		steps=list(range(n + 1)),
		measured=measured.tolist(),
		bound=bound.tolist(),
		satisfied=satisfied,
		max_ratio=max_ratio,
		seed=seed,
	)
