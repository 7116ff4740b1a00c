"""Local polynomial parameterization of time-dependent inputs.

On every interval [t_n, t_n + δ] each input channel is represented by n_b = k + 1
coefficients in one of three bases: Taylor monomials at t_n, Lagrange
polynomials on k + 1 equispaced nodes, or the L2-orthonormal scaled Legendre
polynomials. Coefficient matrices have shape (input_arity, n_b).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Union

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import ContractViolation, DomainError, FitError
from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.services.signals import TimeSignal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalInputParams:
	coeffs: np.ndarray
	delta: float
	basis: BasisSpec

	def __post_init__(self):
		coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
		if coeffs.shape[1] != self.basis.n_b:
			raise ContractViolation(f"coeffs: expected {self.basis.n_b} columns, got shape {coeffs.shape}")
		if not np.all(np.isfinite(coeffs)):
			raise ContractViolation("coeffs: all coefficients must be finite")
		if not self.delta > 0:
			raise ContractViolation(f"delta: must be > 0, got {self.delta}")
		object.__setattr__(self, "coeffs", coeffs)
		object.__setattr__(self, "delta", float(self.delta))

	@property
	def input_arity(self) -> int:
		return self.coeffs.shape[0]

	@property
	def gamma(self) -> np.ndarray:
		"""Γ flattened row-major, the layout used in model inputs"""
		return self.coeffs.reshape(-1)


@dataclass(frozen=True)
class PiecewiseInput:
	breakpoints: np.ndarray
	segments: List[LocalInputParams]

	def __post_init__(self):
		breakpoints = np.asarray(self.breakpoints, dtype=float)
		if breakpoints.ndim != 1 or len(breakpoints) < 2:
			raise ContractViolation("breakpoints: need at least two time instances")
		if np.any(np.diff(breakpoints) <= 0):
			raise ContractViolation("breakpoints: must be strictly increasing")
		if len(self.segments) != len(breakpoints) - 1:
			raise ContractViolation(f"segments: expected {len(breakpoints) - 1}, got {len(self.segments)}")
		for n, seg in enumerate(self.segments):
			if seg.delta != breakpoints[n + 1] - breakpoints[n]:
				raise ContractViolation(f"segments[{n}]: delta {seg.delta} differs from the breakpoint gap")
		object.__setattr__(self, "breakpoints", breakpoints)

	@property
	def gammas(self) -> np.ndarray:
		"""(N, input_arity * n_b) matrix of flattened local parameters"""
		return np.stack([seg.gamma for seg in self.segments])


# =====================================
# Basis functions
# =====================================

def legendre(j: int, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
	"""p_j(x) via (j+1) p_{j+1} = (2j+1) x p_j - j p_{j-1}"""
	if j < 0:
		raise ContractViolation(f"j: must be >= 0, got {j}")
	return legendre_table(j, x)[..., j]


def legendre_table(p: int, x: Union[float, np.ndarray]) -> np.ndarray:
	"""p_0 .. p_p at every point of ``x``; shape x.shape + (p + 1,)"""
	x = np.asarray(x, dtype=float)
	table = np.empty(x.shape + (p + 1,))
	table[..., 0] = 1.0
	if p >= 1:
		table[..., 1] = x
	for j in range(1, p):
		table[..., j + 1] = ((2 * j + 1) * x * table[..., j] - j * table[..., j - 1]) / (j + 1)
	return table


def basis_values(basis: BasisSpec, delta: Union[float, np.ndarray], tau: Union[float, np.ndarray]) -> np.ndarray:
	"""b_j(τ) for j = 0..k; shape broadcast(delta, tau).shape + (n_b,)"""
	delta = np.asarray(delta, dtype=float)
	tau = np.asarray(tau, dtype=float)
	k = basis.degree
	if basis.kind == BasisKind.TAYLOR:
		return np.asarray(tau)[..., None] ** np.arange(k + 1)
	if basis.kind == BasisKind.LAGRANGE:
		shape = np.broadcast(delta, tau).shape
		if k == 0:
			return np.ones(shape + (1,))
		out = np.ones(shape + (k + 1,))
		for j in range(k + 1):
			for i in range(k + 1):
				if i != j:
					out[..., j] *= (k * tau - i * delta) / ((j - i) * delta)
		return out
	if basis.kind == BasisKind.LEGENDRE:
		table = legendre_table(k, 2.0 * tau / delta - 1.0)
		scale = np.sqrt((2 * np.arange(k + 1) + 1) / delta[..., None])
		return table * scale
	raise ContractViolation(f"basis: unknown kind {basis.kind}")


def interp_nodes(t_n: float, delta: float, k: int) -> np.ndarray:
	if k == 0:
		return np.array([t_n])
	return t_n + np.arange(k + 1) * delta / k


# =====================================
# Fitting
# =====================================

@lru_cache(maxsize=32)
def _central_weights(order: int) -> tuple:
	"""4th-order accurate central stencil for the ``order``-th derivative (unit spacing)"""
	r = (order + 1) // 2 + 1
	offsets = np.arange(-r, r + 1, dtype=float)
	vander = np.vander(offsets, increasing=True).T / np.array([math.factorial(m) for m in range(2 * r + 1)])[:, None]
	rhs = np.zeros(2 * r + 1)
	rhs[order] = 1.0
	return tuple(offsets), tuple(np.linalg.solve(vander, rhs))


def _finite_difference_derivatives(signal: TimeSignal, t_n: float, k: int, h: float) -> np.ndarray:
	rows = [np.asarray(signal(t_n), dtype=float)]
	lo, hi = signal.domain
	for order in range(1, k + 1):
		offsets, weights = _central_weights(order)
		points = t_n + h * np.asarray(offsets)
		if points[0] < lo or points[-1] > hi:
			raise FitError(
				f"finite-difference stencil [{points[0]:.6g}, {points[-1]:.6g}] leaves the signal domain [{lo}, {hi}]",
				t_n=t_n,
				order=order,
			)
		values = signal(points)
		rows.append(np.asarray(weights) @ values / h ** order)
	return np.asarray(rows)


def fit_taylor(signal: TimeSignal, t_n: float, delta: float, k: int) -> LocalInputParams:
	basis = BasisSpec(kind=BasisKind.TAYLOR, degree=k)
	derivs = signal.derivatives(t_n, k) if signal.has_derivatives else None
	if derivs is None:
		derivs = _finite_difference_derivatives(signal, t_n, k, settings.TAYLOR_FD_FRACTION * delta)
	factorials = np.array([math.factorial(j) for j in range(k + 1)], dtype=float)
	return LocalInputParams(coeffs=(derivs / factorials[:, None]).T, delta=delta, basis=basis)


def fit_interp(signal: TimeSignal, t_n: float, delta: float, k: int) -> LocalInputParams:
	basis = BasisSpec(kind=BasisKind.LAGRANGE, degree=k)
	values = np.atleast_2d(signal(interp_nodes(t_n, delta, k)))
	return LocalInputParams(coeffs=values.T, delta=delta, basis=basis)


def fit_l2(signal: TimeSignal, t_n: float, delta: float, k: int, quad_order: Optional[int] = None) -> LocalInputParams:
	quad_order = k + 3 if quad_order is None else quad_order
	if quad_order < k + 1:
		raise ContractViolation(f"quad_order: must be >= k + 1 = {k + 1}, got {quad_order}")
	basis = BasisSpec(kind=BasisKind.LEGENDRE, degree=k, quad_order=quad_order)
	nodes, weights = np.polynomial.legendre.leggauss(quad_order)
	values = np.atleast_2d(signal(0.5 * delta * (nodes + 1.0) + t_n))
	table = legendre_table(k, nodes)
	scale = np.sqrt((2 * np.arange(k + 1) + 1) * delta / 4.0)
	coeffs = (values.T * weights) @ table * scale
	return LocalInputParams(coeffs=coeffs, delta=delta, basis=basis)


def fit_local(basis: BasisSpec, signal: TimeSignal, t_n: float, delta: float) -> LocalInputParams:
	if basis.kind == BasisKind.TAYLOR:
		return fit_taylor(signal, t_n, delta, basis.degree)
	if basis.kind == BasisKind.LAGRANGE:
		return fit_interp(signal, t_n, delta, basis.degree)
	return fit_l2(signal, t_n, delta, basis.degree, basis.quadrature_points)


def fit_piecewise(signal: TimeSignal, breakpoints: Sequence[float], basis: BasisSpec) -> PiecewiseInput:
	breakpoints = np.asarray(breakpoints, dtype=float)
	segments = [
		fit_local(basis, signal, float(breakpoints[n]), float(breakpoints[n + 1] - breakpoints[n]))
		for n in range(len(breakpoints) - 1)
	]
	return PiecewiseInput(breakpoints=breakpoints, segments=segments)


# =====================================
# Evaluation
# =====================================

def _clamp_tau(tau: np.ndarray, delta: Union[float, np.ndarray]) -> np.ndarray:
	tol = settings.LOCAL_TAU_TOLERANCE * np.maximum(1.0, delta)
	if np.any(tau < -tol) or np.any(tau > delta + tol):
		raise DomainError(f"tau: outside [0, delta] beyond tolerance", tau=np.asarray(tau).tolist())
	return np.clip(tau, 0.0, delta)


def eval_local(params: LocalInputParams, tau: Union[float, np.ndarray]) -> np.ndarray:
	"""γ̃(τ) per channel; shape (input_arity,) for scalar τ, (len(τ), input_arity) otherwise"""
	tau_arr = _clamp_tau(np.asarray(tau, dtype=float), params.delta)
	return basis_values(params.basis, params.delta, tau_arr) @ params.coeffs.T


def eval_local_batch(coeffs: np.ndarray, deltas: np.ndarray, basis: BasisSpec, tau: Union[float, np.ndarray]) -> np.ndarray:
	"""Evaluate B local parameterizations at once: coeffs (B, arity, n_b), deltas (B,) -> (B, arity)"""
	tau_arr = _clamp_tau(np.broadcast_to(np.asarray(tau, dtype=float), deltas.shape), deltas)
	return np.einsum("bcj,bj->bc", coeffs, basis_values(basis, deltas, tau_arr))


def locate_segment(pw: PiecewiseInput, t: Union[float, np.ndarray]) -> np.ndarray:
	"""Half-open [t_n, t_{n+1}) lookup, last segment closed on the right"""
	t = np.asarray(t, dtype=float)
	bp = pw.breakpoints
	if np.any(t < bp[0]) or np.any(t > bp[-1]):
		raise DomainError(f"t: outside [{bp[0]}, {bp[-1]}]", t=np.atleast_1d(t).tolist())
	idx = np.searchsorted(bp, t, side="right") - 1
	return np.minimum(idx, len(pw.segments) - 1)


def eval_global(pw: PiecewiseInput, t: Union[float, np.ndarray]) -> np.ndarray:
	t_arr = np.atleast_1d(np.asarray(t, dtype=float))
	idx = locate_segment(pw, t_arr)
	out = np.empty((len(t_arr), pw.segments[0].input_arity))
	for n in np.unique(idx):
		mask = idx == n
		out[mask] = eval_local(pw.segments[n], t_arr[mask] - pw.breakpoints[n])
	return out[0] if np.ndim(t) == 0 else out


def sup_error(signal: TimeSignal, pw: PiecewiseInput, samples_per_segment: int) -> float:
	"""η estimate: max |γ - γ̃| over a dense grid of every closed segment (a lower bound of the sup norm)"""
	if samples_per_segment < 2:
		raise ContractViolation(f"samples_per_segment: must be >= 2, got {samples_per_segment}")
	eta = 0.0
	for n, seg in enumerate(pw.segments):
		tau = np.linspace(0.0, seg.delta, samples_per_segment)
		gap = np.abs(np.atleast_2d(signal(pw.breakpoints[n] + tau)) - eval_local(seg, tau))
		eta = max(eta, float(np.max(gap)))
	return eta
