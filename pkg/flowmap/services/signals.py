"""Time-dependent input signals γ(t).

A signal returns one value per input channel. Closed-form signals are sympy
expressions of ``t`` and provide exact derivatives (used by Taylor fitting);
sampled signals only provide point values.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp

from flowmap.core.exceptions import ConfigError, ContractViolation, DomainError

ArrayLike = Union[float, np.ndarray]

T_SYMBOL = sp.Symbol("t", real=True)

# Rounding allowance when stage times land on a domain end
DOMAIN_SLACK = 1e-12


def _broadcast(value: ArrayLike, t: np.ndarray) -> np.ndarray:
	return np.broadcast_to(np.asarray(value, dtype=float), t.shape).astype(float)


class TimeSignal(ABC):
	input_arity: int
	domain: Tuple[float, float] = (-math.inf, math.inf)

	@abstractmethod
	def values(self, t: np.ndarray) -> np.ndarray:
		"""Values at the 1-D array of times ``t`` with shape (len(t), input_arity)."""

	def derivatives(self, t: float, order: int) -> Optional[np.ndarray]:
		"""Derivatives 0..order at ``t`` with shape (order + 1, input_arity), or None when unavailable."""
		return None

	@property
	def has_derivatives(self) -> bool:
		return False

	def __call__(self, t: ArrayLike) -> np.ndarray:
		t_arr = np.atleast_1d(np.asarray(t, dtype=float))
		lo, hi = self.domain
		if math.isfinite(lo) or math.isfinite(hi):
			slack = DOMAIN_SLACK * max(1.0, abs(lo) if math.isfinite(lo) else 0.0, abs(hi) if math.isfinite(hi) else 0.0)
			if np.any(t_arr < lo - slack) or np.any(t_arr > hi + slack):
				raise DomainError(f"signal evaluated outside its domain [{lo}, {hi}]", t=t_arr.tolist())
			t_arr = np.clip(t_arr, lo, hi)
		out = self.values(t_arr)
		return out[0] if np.ndim(t) == 0 else out


def parse_expression(text: str, namespace: Dict[str, sp.Symbol], field: str) -> sp.Expr:
	"""sympify a user expression; parse failures are configuration errors naming the expression"""
	try:
		return sp.sympify(text, locals=namespace)
	except (sp.SympifyError, SyntaxError, TypeError) as e:
		raise ConfigError(f"{field}: cannot parse expression {text!r}: {e}", expression=text)


class ExpressionSignal(TimeSignal):
	"""Closed-form signal, one sympy expression of ``t`` per channel"""

	def __init__(self, expressions: Sequence[str]):
		if not expressions:
			raise ContractViolation("expressions: at least one channel is required")
		self.expressions: List[str] = list(expressions)
		self.input_arity = len(self.expressions)
		self._exprs = [parse_expression(e, {"t": T_SYMBOL}, "expressions") for e in self.expressions]
		for text, expr in zip(self.expressions, self._exprs):
			unknown = expr.free_symbols - {T_SYMBOL}
			if unknown:
				raise ContractViolation(f"expressions: {text!r} uses symbols other than t: {sorted(map(str, unknown))}")
		self._compiled: Dict[int, Optional[List[Callable]]] = {}

	def _lambdas(self, order: int) -> Optional[List[Callable]]:
		if order not in self._compiled:
			derived = [sp.diff(expr, T_SYMBOL, order) if order else expr for expr in self._exprs]
			if any(d.has(sp.Derivative) or d.has(sp.Subs) for d in derived):
				self._compiled[order] = None
			else:
				self._compiled[order] = [sp.lambdify(T_SYMBOL, d, "numpy") for d in derived]
		return self._compiled[order]

	def values(self, t: np.ndarray) -> np.ndarray:
		fns = self._lambdas(0)
		return np.stack([_broadcast(fn(t), t) for fn in fns], axis=-1)

	def derivatives(self, t: float, order: int) -> Optional[np.ndarray]:
		rows = []
		t_arr = np.array([float(t)])
		for j in range(order + 1):
			fns = self._lambdas(j)
			if fns is None:
				return None
			rows.append([float(_broadcast(fn(t_arr), t_arr)[0]) for fn in fns])
		return np.asarray(rows, dtype=float)

	@property
	def has_derivatives(self) -> bool:
		return True

	def __repr__(self) -> str:
		return f"ExpressionSignal({self.expressions!r})"


class SampledSignal(TimeSignal):
	"""Signal known only at discrete times; linear interpolation in between"""

	def __init__(self, times: Sequence[float], values: np.ndarray):
		times = np.asarray(times, dtype=float)
		values = np.asarray(values, dtype=float)
		if values.ndim == 1:
			values = values[:, None]
		if times.ndim != 1 or len(times) < 2:
			raise ContractViolation("times: need at least two sample times")
		if np.any(np.diff(times) <= 0):
			raise ContractViolation("times: must be strictly increasing")
		if values.shape[0] != len(times):
			raise ContractViolation(f"values: expected {len(times)} rows, got {values.shape[0]}")
		self.times = times
		self.samples = values
		self.input_arity = values.shape[1]
		self.domain = (float(times[0]), float(times[-1]))

	def values(self, t: np.ndarray) -> np.ndarray:
		return np.stack([np.interp(t, self.times, self.samples[:, c]) for c in range(self.input_arity)], axis=-1)


class CallableSignal(TimeSignal):
	"""Wraps a python callable t -> values, with an optional derivative callable (t, order) -> array"""

	def __init__(
			self,
			fn: Callable[[np.ndarray], np.ndarray],
			input_arity: int,
			derivative_fn: Optional[Callable[[float, int], np.ndarray]] = None,
			domain: Tuple[float, float] = (-math.inf, math.inf),
	):
		self.fn = fn
		self.input_arity = input_arity
		self.derivative_fn = derivative_fn
		self.domain = domain

	def values(self, t: np.ndarray) -> np.ndarray:
		out = np.asarray(self.fn(t), dtype=float)
		return out.reshape(len(t), self.input_arity)

	def derivatives(self, t: float, order: int) -> Optional[np.ndarray]:
		if self.derivative_fn is None:
			return None
		return np.asarray(self.derivative_fn(t, order), dtype=float).reshape(order + 1, self.input_arity)

	@property
	def has_derivatives(self) -> bool:
		return self.derivative_fn is not None


def constant_signal(values: Sequence[float]) -> ExpressionSignal:
	return ExpressionSignal([repr(float(v)) for v in values])
