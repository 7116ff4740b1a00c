"""Benchmark non-autonomous systems and the fixed-step RK4 reference solver.

Right-hand sides are vectorized over a leading batch axis: ``rhs(x, g)`` maps
states of shape (..., d) and input values of shape (..., input_arity) to
derivatives of shape (..., d). The same code therefore integrates one
trajectory or a whole batch of training samples at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from flowmap.core.exceptions import ContractViolation, NumericalOverflowError, StabilityError
from flowmap.services.signals import TimeSignal, parse_expression

logger = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, np.ndarray], np.ndarray]
SignalFn = Callable[[Union[float, np.ndarray]], np.ndarray]

# Explicit-scheme guard for the semidiscrete heat system: h <= 0.4 * dx^2
HEAT_STABILITY_FACTOR = 0.4


@dataclass(frozen=True)
class Lipschitz:
	L1: float
	L2: float


@dataclass(frozen=True)
class SystemSpec:
	name: str
	d: int
	input_arity: int
	rhs: Rhs
	lipschitz: Optional[Lipschitz] = None
	# Horizon-dependent constants: (signal, t0, t1) -> Lipschitz
	lipschitz_fn: Optional[Callable[[TimeSignal, float, float], Lipschitz]] = None
	# Largest admissible explicit step, None when unconstrained
	max_step: Optional[float] = None
	extras: Mapping[str, float] = field(default_factory=dict)

	def lipschitz_over(self, signal: TimeSignal, t0: float, t1: float) -> Optional[Lipschitz]:
		if self.lipschitz is not None:
			return self.lipschitz
		if self.lipschitz_fn is not None:
			return self.lipschitz_fn(signal, t0, t1)
		return None


@dataclass(frozen=True)
class SystemFamily:
	"""Systems parameterized by constant extras (e.g. heat source centre and width).

	``build`` receives the extras either as a vector (n_extra,) or as a batch
	(B, n_extra); in the batched case the returned system's rhs expects states
	of shape (B, d).
	"""
	name: str
	d: int
	input_arity: int
	extra_names: Tuple[str, ...]
	build: Callable[[np.ndarray], SystemSpec]

	def bind(self, extras: Union[Sequence[float], np.ndarray, Mapping[str, float]]) -> SystemSpec:
		if isinstance(extras, Mapping):
			missing = [n for n in self.extra_names if n not in extras]
			if missing:
				raise ContractViolation(f"extras: missing {missing} for system {self.name}")
			extras = [extras[n] for n in self.extra_names]
		values = np.asarray(extras, dtype=float)
		if values.shape[-1] != len(self.extra_names):
			raise ContractViolation(
				f"extras: expected {len(self.extra_names)} values {self.extra_names}, got shape {values.shape}"
			)
		return self.build(values)


AnySystem = Union[SystemSpec, SystemFamily]


@dataclass(frozen=True)
class Trajectory:
	times: np.ndarray
	states: np.ndarray

	def __post_init__(self):
		times = np.asarray(self.times, dtype=float)
		states = np.asarray(self.states, dtype=float)
		if states.ndim == 1:
			states = states[:, None]
		if times.ndim != 1 or len(times) < 1:
			raise ContractViolation("times: need at least one time instance")
		if len(times) != len(states):
			raise ContractViolation(f"states: expected {len(times)} rows, got {len(states)}")
		if np.any(np.diff(times) <= 0):
			raise ContractViolation("times: must be strictly increasing")
		object.__setattr__(self, "times", times)
		object.__setattr__(self, "states", states)

	@property
	def d(self) -> int:
		return self.states.shape[1]

	def __len__(self) -> int:
		return len(self.times)


@dataclass(frozen=True)
class HeatConfig:
	n_grid: int = 22
	mu: float = 1.0
	sigma: float = 0.5
	alpha_signal: Optional[TimeSignal] = None

	def __post_init__(self):
		if self.n_grid < 3:
			raise ContractViolation(f"n_grid: must be >= 3, got {self.n_grid}")
		if not self.sigma > 0:
			raise ContractViolation(f"sigma: must be > 0, got {self.sigma}")


def _inputs_at(signal: Optional[SignalFn], t: Union[float, np.ndarray], system: SystemSpec, batch_shape) -> np.ndarray:
	if system.input_arity == 0:
		return np.zeros(batch_shape + (system.input_arity,))
	if signal is None:
		raise ContractViolation(f"signal: {system.name} takes {system.input_arity} input channel(s), none given")
	return np.asarray(signal(t), dtype=float)


def eval_rhs(system: SystemSpec, x: np.ndarray, gamma_values: np.ndarray) -> np.ndarray:
	x = np.asarray(x, dtype=float)
	gamma_values = np.asarray(gamma_values, dtype=float)
	if x.shape[-1:] != (system.d,):
		raise ContractViolation(f"x: expected trailing dimension {system.d}, got shape {x.shape}")
	if gamma_values.shape[-1:] != (system.input_arity,):
		raise ContractViolation(
			f"gamma_values: expected trailing dimension {system.input_arity}, got shape {gamma_values.shape}"
		)
	return np.asarray(system.rhs(x, gamma_values), dtype=float)


def rk4_increment(
		system: SystemSpec,
		x: np.ndarray,
		t: Union[float, np.ndarray],
		h: Union[float, np.ndarray],
		signal: Optional[SignalFn],
) -> np.ndarray:
	"""One classical RK4 step without finiteness checks (batched callers mask failures themselves)"""
	batch_shape = x.shape[:-1]
	hb = np.asarray(h, dtype=float)
	hs = hb[..., None] if hb.ndim else hb
	f = system.rhs
	k1 = f(x, _inputs_at(signal, t, system, batch_shape))
	k2 = f(x + 0.5 * hs * k1, _inputs_at(signal, t + 0.5 * hb, system, batch_shape))
	k3 = f(x + 0.5 * hs * k2, _inputs_at(signal, t + 0.5 * hb, system, batch_shape))
	k4 = f(x + hs * k3, _inputs_at(signal, t + hb, system, batch_shape))
	return x + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def check_step(system: SystemSpec, h: Union[float, np.ndarray]) -> None:
	h_max = float(np.max(h))
	if not float(np.min(h)) > 0:
		raise ContractViolation(f"h: step must be positive, got {h}")
	if system.max_step is not None and h_max > system.max_step:
		raise StabilityError(
			f"h: step {h_max:.3e} exceeds the explicit stability limit {system.max_step:.3e} of {system.name}"
		)


def rk4_step(
		system: SystemSpec,
		x: np.ndarray,
		t: float,
		h: float,
		signal: Optional[SignalFn] = None,
) -> np.ndarray:
	x = np.asarray(x, dtype=float)
	check_step(system, h)
	with np.errstate(over="ignore", invalid="ignore"):
		x_next = rk4_increment(system, x, t, h, signal)
	if not np.all(np.isfinite(x_next)):
		raise NumericalOverflowError(f"non-finite state after RK4 step at t={t}", t=t, x=x)
	return x_next


def integrate(
		system: SystemSpec,
		x0: np.ndarray,
		t0: float,
		t1: float,
		n_steps: int,
		signal: Optional[SignalFn] = None,
) -> Trajectory:
	if not t1 > t0:
		raise ContractViolation(f"t1: must exceed t0={t0}, got {t1}")
	if n_steps < 1:
		raise ContractViolation(f"n_steps: must be >= 1, got {n_steps}")
	x0 = np.asarray(x0, dtype=float)
	if x0.shape != (system.d,):
		raise ContractViolation(f"x0: expected shape ({system.d},), got {x0.shape}")

	h = (t1 - t0) / n_steps
	times = t0 + h * np.arange(n_steps + 1)
	times[-1] = t1
	states = np.empty((n_steps + 1, system.d))
	states[0] = x0
	for i in range(n_steps):
		try:
			states[i + 1] = rk4_step(system, states[i], times[i], h, signal)
		except NumericalOverflowError as exc:
			raise exc.at_step(i) from exc
	return Trajectory(times=times, states=states)


# =====================================
# Benchmark systems
# =====================================

def linear_scalar() -> SystemSpec:
	"""dx/dt = -α(t) x + β(t); inputs (α, β)"""

	def rhs(x: np.ndarray, g: np.ndarray) -> np.ndarray:
		return -g[..., 0:1] * x + g[..., 1:2]

	def lipschitz_fn(signal: TimeSignal, t0: float, t1: float) -> Lipschitz:
		grid = np.linspace(t0, t1, max(int((t1 - t0) * 1000), 2) + 1)
		return Lipschitz(L1=float(np.max(np.abs(signal(grid)[:, 0]))), L2=1.0)

	return SystemSpec(name="linear_scalar", d=1, input_arity=2, rhs=rhs, lipschitz_fn=lipschitz_fn)


def predator_prey() -> SystemSpec:
	"""Lotka-Volterra with control u(t) on the prey equation"""

	def rhs(x: np.ndarray, g: np.ndarray) -> np.ndarray:
		x1, x2 = x[..., 0], x[..., 1]
		return np.stack([x1 - x1 * x2 + g[..., 0], -x2 + x1 * x2], axis=-1)

	return SystemSpec(name="predator_prey", d=2, input_arity=1, rhs=rhs)


def forced_oscillator(k: float = 0.1) -> SystemSpec:
	"""x1' = x2, x2' = -ν(t) x1 - k x2 + f(t); inputs (ν, f)"""

	def rhs(x: np.ndarray, g: np.ndarray) -> np.ndarray:
		x1, x2 = x[..., 0], x[..., 1]
		return np.stack([x2, -g[..., 0] * x1 - k * x2 + g[..., 1]], axis=-1)

	return SystemSpec(name="forced_oscillator", d=2, input_arity=2, rhs=rhs, extras={"k": k})


def heat_grid(n_grid: int) -> np.ndarray:
	return np.linspace(0.0, 1.0, n_grid)


def heat_laplacian(n_grid: int) -> np.ndarray:
	"""Central-difference Laplacian on the interior points, zero Dirichlet boundaries"""
	d = n_grid - 2
	dx = 1.0 / (n_grid - 1)
	lap = -2.0 * np.eye(d) + np.eye(d, k=1) + np.eye(d, k=-1)
	return lap / dx ** 2


def heat_source_profile(n_grid: int, mu: Union[float, np.ndarray], sigma: Union[float, np.ndarray]) -> np.ndarray:
	x_int = heat_grid(n_grid)[1:-1]
	mu = np.asarray(mu, dtype=float)[..., None]
	sigma = np.asarray(sigma, dtype=float)[..., None]
	return np.exp(-((x_int - mu) ** 2) / sigma ** 2)


def _heat_system(n_grid: int, mu, sigma) -> SystemSpec:
	lap = heat_laplacian(n_grid)
	source = heat_source_profile(n_grid, mu, sigma)
	dx = 1.0 / (n_grid - 1)

	def rhs(u: np.ndarray, g: np.ndarray) -> np.ndarray:
		return u @ lap.T + g[..., 0:1] * source

	# Spectral radius of the stencil and the sup of the source bound the two Lipschitz constants
	lipschitz = Lipschitz(L1=float(np.max(np.abs(np.linalg.eigvalsh(lap)))), L2=float(np.max(np.linalg.norm(source, axis=-1))))
	extras = {"mu": float(mu), "sigma": float(sigma)} if np.ndim(mu) == 0 else {}
	return SystemSpec(
		name="heat",
		d=n_grid - 2,
		input_arity=1,
		rhs=rhs,
		lipschitz=lipschitz,
		max_step=HEAT_STABILITY_FACTOR * dx ** 2,
		extras=extras,
	)


def make_heat_system(cfg: HeatConfig) -> SystemSpec:
	return _heat_system(cfg.n_grid, cfg.mu, cfg.sigma)


def heat_family(n_grid: int = 22) -> SystemFamily:
	def build(extras: np.ndarray) -> SystemSpec:
		return _heat_system(n_grid, extras[..., 0], extras[..., 1])

	return SystemFamily(
		name=f"heat{n_grid}", d=n_grid - 2, input_arity=1, extra_names=("mu", "sigma"), build=build
	)


def heat_profile(states: np.ndarray) -> np.ndarray:
	"""Pad interior states with the fixed zero boundary values"""
	states = np.asarray(states, dtype=float)
	pad = [(0, 0)] * (states.ndim - 1) + [(1, 1)]
	return np.pad(states, pad)


# =====================================
# Custom symbolic systems
# =====================================

def _lambdify_rhs(
		state_names: Sequence[str],
		input_names: Sequence[str],
		param_names: Sequence[str],
		rhs_exprs: Sequence[str],
		constants: Mapping[str, float],
) -> Callable[..., np.ndarray]:
	if len(rhs_exprs) != len(state_names):
		raise ContractViolation(f"rhs: expected {len(state_names)} expressions, got {len(rhs_exprs)}")
	symbols = [sp.Symbol(n, real=True) for n in list(state_names) + list(input_names) + list(param_names)]
	namespace = {s.name: s for s in symbols}
	fixed = {sp.Symbol(k, real=True): v for k, v in constants.items()}
	namespace.update({s.name: s for s in fixed})
	exprs = [parse_expression(e, namespace, "rhs").subs(fixed) for e in rhs_exprs]
	for text, expr in zip(rhs_exprs, exprs):
		unknown = expr.free_symbols - set(symbols)
		if unknown:
			raise ContractViolation(f"rhs: {text!r} uses undefined symbols {sorted(map(str, unknown))}")
	fns = [sp.lambdify(symbols, e, "numpy") for e in exprs]

	def evaluate(x: np.ndarray, g: np.ndarray, p: np.ndarray) -> np.ndarray:
		shape = np.broadcast_shapes(x.shape[:-1], g.shape[:-1], p.shape[:-1])
		args = [x[..., i] for i in range(x.shape[-1])] + [g[..., j] for j in range(g.shape[-1])]
		args += [p[..., k] for k in range(p.shape[-1])]
		return np.stack([np.broadcast_to(np.asarray(fn(*args), dtype=float), shape) for fn in fns], axis=-1)

	return evaluate


def symbolic_system(
		name: str,
		state_names: Sequence[str],
		input_names: Sequence[str],
		rhs_exprs: Sequence[str],
		extras: Optional[Dict[str, float]] = None,
		lipschitz: Optional[Lipschitz] = None,
) -> SystemSpec:
	"""Build a system from sympy right-hand-side expressions; ``extras`` are fixed named constants"""
	extras = dict(extras or {})
	evaluate = _lambdify_rhs(state_names, input_names, [], rhs_exprs, extras)
	no_params = np.zeros(0)

	def rhs(x: np.ndarray, g: np.ndarray) -> np.ndarray:
		return evaluate(x, g, no_params)

	return SystemSpec(
		name=name, d=len(state_names), input_arity=len(input_names), rhs=rhs, lipschitz=lipschitz, extras=extras
	)


def symbolic_family(
		name: str,
		state_names: Sequence[str],
		input_names: Sequence[str],
		param_names: Sequence[str],
		rhs_exprs: Sequence[str],
		constants: Optional[Dict[str, float]] = None,
		lipschitz: Optional[Lipschitz] = None,
) -> SystemFamily:
	"""Symbolic system whose named parameters are sampled and appended to the model input"""
	evaluate = _lambdify_rhs(state_names, input_names, param_names, rhs_exprs, dict(constants or {}))

	def build(values: np.ndarray) -> SystemSpec:
		def rhs(x: np.ndarray, g: np.ndarray) -> np.ndarray:
			return evaluate(x, g, values)

		extras = dict(zip(param_names, values.tolist())) if values.ndim == 1 else {}
		return SystemSpec(
			name=name, d=len(state_names), input_arity=len(input_names), rhs=rhs, lipschitz=lipschitz, extras=extras
		)

	return SystemFamily(
		name=name, d=len(state_names), input_arity=len(input_names), extra_names=tuple(param_names), build=build
	)
