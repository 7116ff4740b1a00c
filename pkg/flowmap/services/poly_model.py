"""Tensor-Legendre polynomial one-step model in a total-degree space.

The model fits the increment x_out - x_in by least squares and predicts
X_out = Î X_in + cᵀ Φ(X̂_in), where X̂_in is the affine image of the input in
[-1, 1]^m under the training domain box.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Iterator, Optional, Tuple

import numpy as np

from flowmap.config import settings
from flowmap.core.exceptions import CapacityError, ContractViolation
from flowmap.core.logging import log_event, timed
from flowmap.schemas.base import Box
from flowmap.services.dataset import TrainingSet
from flowmap.services.input_param import legendre_table

logger = logging.getLogger(__name__)

# Slack before an input counts as outside the domain box
BOX_TOLERANCE = 1e-12


def _indices(m: int, p: int) -> Iterator[Tuple[int, ...]]:
	if m == 1:
		for a in range(p + 1):
			yield (a,)
		return
	for a in range(p + 1):
		for rest in _indices(m - 1, p - a):
			yield (a,) + rest


def total_degree_indices(m: int, p: int) -> np.ndarray:
	"""All α in N^m with |α|₁ <= p, lexicographic; shape (C(m+p, p), m)"""
	if m < 1 or p < 0:
		raise ContractViolation(f"m, p: need m >= 1 and p >= 0, got m={m}, p={p}")
	n_terms = math.comb(m + p, p)
	if n_terms > settings.POLY_MAX_TERMS:
		raise CapacityError(
			f"total-degree space of dimension {m} and degree {p} has {n_terms} terms, cap is {settings.POLY_MAX_TERMS}",
			n_terms=n_terms,
		)
	return np.array(list(_indices(m, p)), dtype=int).reshape(n_terms, m)


def to_unit_box(box: Box, X: np.ndarray) -> np.ndarray:
	lo, hi = np.asarray(box.lo), np.asarray(box.hi)
	half = 0.5 * (hi - lo)
	scale = np.divide(1.0, half, out=np.zeros_like(half), where=half > 0)
	return (X - 0.5 * (lo + hi)) * scale


def features(X_in: np.ndarray, index_set: np.ndarray, box: Box) -> Tuple[np.ndarray, np.ndarray]:
	"""Φ_α(X̂) = Π_i p_{α_i}(X̂_i) for every row, plus a per-row out-of-box flag"""
	X = np.atleast_2d(np.asarray(X_in, dtype=float))
	if X.shape[1] != index_set.shape[1] or box.dim != index_set.shape[1]:
		raise ContractViolation(f"X_in: expected {index_set.shape[1]} entries, got {X.shape[1]}")
	X_hat = to_unit_box(box, X)
	outside = np.any(np.abs(X_hat) > 1.0 + BOX_TOLERANCE, axis=1)
	table = legendre_table(int(index_set.max(initial=0)), X_hat)
	phi = np.ones((len(X), len(index_set)))
	for i in range(index_set.shape[1]):
		phi *= table[:, i, index_set[:, i]]
	return phi, outside


@dataclass(frozen=True)
class PolyModel:
	dim: int
	d: int
	degree: int
	index_set: np.ndarray
	coeffs: np.ndarray
	domain_box: Box
	rcond: float = 1e-12
	effective_rank: int = 0
	residual: float = 0.0

	def __post_init__(self):
		if self.coeffs.shape != (len(self.index_set), self.d):
			raise ContractViolation(f"coeffs: expected shape {(len(self.index_set), self.d)}, got {self.coeffs.shape}")
		if self.domain_box.dim != self.dim:
			raise ContractViolation(f"domain_box: expected {self.dim} coordinates, got {self.domain_box.dim}")

	@property
	def n_terms(self) -> int:
		return len(self.index_set)

	def to_dict(self) -> Dict[str, Any]:
		return {"coeffs": self.coeffs.tolist()}

	@classmethod
	def from_dict(
			cls,
			payload: Dict[str, Any],
			dim: int,
			d: int,
			degree: int,
			domain_box: Box,
			rcond: float = 1e-12,
			effective_rank: int = 0,
			residual: float = 0.0,
	) -> "PolyModel":
		index_set = total_degree_indices(dim, degree)
		coeffs = np.asarray(payload["coeffs"], dtype=float).reshape(len(index_set), d)
		return cls(
			dim=dim, d=d, degree=degree, index_set=index_set, coeffs=coeffs, domain_box=domain_box,
			rcond=rcond, effective_rank=effective_rank, residual=residual,
		)


def fit(dataset: TrainingSet, p: int, rcond: Optional[float] = None) -> PolyModel:
	rcond = settings.POLY_RCOND if rcond is None else rcond
	X = dataset.inputs()
	m, d = X.shape[1], dataset.layout.d
	index_set = total_degree_indices(m, p)
	box = dataset.coverage
	if len(X) < len(index_set):
		log_event(
			logger, "under-determined polynomial fit", level=logging.WARNING,
			samples=len(X), terms=len(index_set), degree=p,
		)

	with timed(logger, "poly_fit", degree=p, terms=len(index_set), samples=len(X)):
		A, _ = features(X, index_set, box)
		increments = dataset.x_out - dataset.x_in
		coeffs, _, rank, _ = np.linalg.lstsq(A, increments, rcond=rcond)
		misfit = A @ coeffs - increments
	residual = float(np.sqrt(np.sum(misfit * misfit) / len(X)))

	if rank < len(index_set):
		log_event(
			logger, "rank-deficient polynomial fit", level=logging.WARNING,
			effective_rank=int(rank), terms=len(index_set), degree=p,
		)
	log_event(logger, "polynomial model fitted", degree=p, terms=len(index_set), residual=residual)
	return PolyModel(
		dim=m, d=d, degree=p, index_set=index_set, coeffs=coeffs, domain_box=box,
		rcond=rcond, effective_rank=int(rank), residual=residual,
	)


def poly_forward(model: PolyModel, X_in: np.ndarray) -> np.ndarray:
	X = np.asarray(X_in, dtype=float)
	if X.shape[-1] != model.dim:
		raise ContractViolation(f"X_in: expected {model.dim} entries, got {X.shape[-1]}")
	phi, _ = features(X.reshape(-1, model.dim), model.index_set, model.domain_box)
	out = X.reshape(-1, model.dim)[:, :model.d] + phi @ model.coeffs
	return out.reshape(X.shape[:-1] + (model.d,))
