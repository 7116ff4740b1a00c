"""Residual feed-forward flow-map network: X_out = Î X_in + N(X_in; Θ).

Weights use the bias-augmented convention, one (out, in + 1) matrix per layer
with the bias in the last column. Hidden layers use tanh, the output layer is
linear. Inputs may carry a leading batch axis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from flowmap.core.exceptions import ContractViolation, NumericalError
from flowmap.schemas.base import Box

logger = logging.getLogger(__name__)

INIT_SCHEMES = ("glorot_uniform",)

# (layer input, pre-activation) per layer
Cache = List[Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class NetParams:
	layer_sizes: Tuple[int, ...]
	weights: Tuple[np.ndarray, ...]
	# Affine map of model inputs onto [-1, 1]; None feeds inputs through unchanged
	normalizer: Optional[Box] = None

	def __post_init__(self):
		sizes = tuple(int(s) for s in self.layer_sizes)
		if len(sizes) < 3 or min(sizes) < 1:
			raise ContractViolation(f"layer_sizes: need (m, h_1, ..., h_L, d) with L >= 1, got {sizes}")
		weights = tuple(np.asarray(w, dtype=float) for w in self.weights)
		if len(weights) != len(sizes) - 1:
			raise ContractViolation(f"weights: expected {len(sizes) - 1} matrices, got {len(weights)}")
		for i, w in enumerate(weights):
			if w.shape != (sizes[i + 1], sizes[i] + 1):
				raise ContractViolation(f"weights[{i}]: expected shape {(sizes[i + 1], sizes[i] + 1)}, got {w.shape}")
			if not np.all(np.isfinite(w)):
				raise ContractViolation(f"weights[{i}]: entries must be finite")
		if self.normalizer is not None and self.normalizer.dim != sizes[0]:
			raise ContractViolation(f"normalizer: expected {sizes[0]} coordinates, got {self.normalizer.dim}")
		object.__setattr__(self, "layer_sizes", sizes)
		object.__setattr__(self, "weights", weights)

	@property
	def m(self) -> int:
		return self.layer_sizes[0]

	@property
	def d(self) -> int:
		return self.layer_sizes[-1]

	@property
	def n_weights(self) -> int:
		return sum(w.size for w in self.weights)

	def with_weights(self, weights: Sequence[np.ndarray]) -> "NetParams":
		return NetParams(layer_sizes=self.layer_sizes, weights=tuple(weights), normalizer=self.normalizer)

	def with_normalizer(self, normalizer: Optional[Box]) -> "NetParams":
		return NetParams(layer_sizes=self.layer_sizes, weights=self.weights, normalizer=normalizer)

	def to_dict(self) -> Dict[str, Any]:
		"""Checkpoint body; layer sizes and normalizer travel in the header"""
		return {"weights": [w.tolist() for w in self.weights]}

	@classmethod
	def from_dict(
			cls,
			payload: Dict[str, Any],
			layer_sizes: Sequence[int],
			normalizer: Optional[Box] = None,
	) -> "NetParams":
		return cls(
			layer_sizes=tuple(layer_sizes),
			weights=tuple(np.asarray(w, dtype=float) for w in payload["weights"]),
			normalizer=normalizer,
		)


def ihat(d: int, m: int) -> np.ndarray:
	"""[I_d, 0], the state-extracting residual matrix"""
	if m < d:
		raise ContractViolation(f"m: input width {m} is smaller than the state dimension {d}")
	return np.eye(d, m)


def normalize_inputs(normalizer: Optional[Box], X: np.ndarray) -> np.ndarray:
	if normalizer is None:
		return X
	lo, hi = np.asarray(normalizer.lo), np.asarray(normalizer.hi)
	half = 0.5 * (hi - lo)
	# Degenerate coordinates (e.g. a fixed δ) map to 0
	scale = np.divide(1.0, half, out=np.zeros_like(half), where=half > 0)
	return (X - 0.5 * (lo + hi)) * scale


def _check_width(params: NetParams, X: np.ndarray) -> None:
	if X.shape[-1] != params.m:
		raise ContractViolation(f"X_in: expected {params.m} entries, got {X.shape[-1]}")


def fnn_forward(params: NetParams, y_in: np.ndarray) -> Tuple[np.ndarray, Cache]:
	y = np.asarray(y_in, dtype=float)
	_check_width(params, y)
	a = y
	cache: Cache = []
	last = len(params.weights) - 1
	with np.errstate(over="ignore", invalid="ignore"):
		for i, w in enumerate(params.weights):
			z = a @ w[:, :-1].T + w[:, -1]
			cache.append((a, z))
			a = z if i == last else np.tanh(z)
			if not np.all(np.isfinite(a)):
				raise NumericalError(f"non-finite activation in layer {i}", layer=i)
	return a, cache


def model_forward(params: NetParams, X_in: np.ndarray, return_cache: bool = False):
	"""Î·X_in + N(X_in); the residual path always uses the un-normalized state"""
	X = np.asarray(X_in, dtype=float)
	_check_width(params, X)
	net_out, cache = fnn_forward(params, normalize_inputs(params.normalizer, X))
	X_out = X[..., :params.d] + net_out
	return (X_out, cache) if return_cache else X_out


def model_backward(
		params: NetParams,
		X_in: np.ndarray,
		residual: np.ndarray,
		cache: Optional[Cache] = None,
) -> List[np.ndarray]:
	"""Gradient of ½ Σ ‖residual‖² (summed over the batch) for every weight matrix"""
	if cache is None:
		_, cache = model_forward(params, X_in, return_cache=True)
	delta = np.asarray(residual, dtype=float)
	batched = delta.ndim == 2
	if not batched:
		delta = delta[None, :]
	grads: List[np.ndarray] = [np.empty(0)] * len(params.weights)
	for i in range(len(params.weights) - 1, -1, -1):
		a_prev, z = cache[i]
		if i != len(params.weights) - 1:
			delta = delta * (1.0 - np.tanh(z.reshape(delta.shape)) ** 2)
		a_prev = a_prev.reshape(len(delta), -1)
		grads[i] = np.concatenate([delta.T @ a_prev, delta.sum(axis=0)[:, None]], axis=1)
		if i:
			delta = delta @ params.weights[i][:, :-1]
	return grads


def init_params(
		layer_sizes: Sequence[int],
		seed: Optional[int] = 0,
		scheme: str = "glorot_uniform",
		normalizer: Optional[Box] = None,
) -> NetParams:
	"""Glorot-uniform hidden layers, zero biases, zero output layer (identity on states at start)"""
	if scheme not in INIT_SCHEMES:
		raise ContractViolation(f"scheme: unknown initialization {scheme!r}, expected one of {INIT_SCHEMES}")
	sizes = tuple(int(s) for s in layer_sizes)
	if len(sizes) < 3:
		raise ContractViolation(f"layer_sizes: need at least one hidden layer, got {sizes}")
	rng = np.random.default_rng(seed)
	weights = []
	for fan_in, fan_out in zip(sizes[:-2], sizes[1:-1]):
		bound = np.sqrt(6.0 / (fan_in + fan_out))
		w = np.zeros((fan_out, fan_in + 1))
		w[:, :-1] = rng.uniform(-bound, bound, size=(fan_out, fan_in))
		weights.append(w)
	weights.append(np.zeros((sizes[-1], sizes[-2] + 1)))
	return NetParams(layer_sizes=sizes, weights=tuple(weights), normalizer=normalizer)
