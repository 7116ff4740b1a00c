"""Minibatch MSE training of the residual network with a hand-written Adam."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from flowmap.core.exceptions import ContractViolation, NumericalError, TrainingDivergedError
from flowmap.core.logging import log_event, timed
from flowmap.monitoring import metrics
from flowmap.schemas.training import TrainConfig
from flowmap.services.dataset import TrainingSet
from flowmap.services.flownet import NetParams, model_backward, model_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamState:
	params: NetParams
	m: Tuple[np.ndarray, ...]
	v: Tuple[np.ndarray, ...]
	step: int = 0

	@classmethod
	def fresh(cls, params: NetParams) -> "AdamState":
		zeros = tuple(np.zeros_like(w) for w in params.weights)
		return cls(params=params, m=zeros, v=tuple(z.copy() for z in zeros), step=0)


@dataclass
class TrainReport:
	loss_history: List[float]
	val_history: List[float]
	final_params: NetParams
	# Training MSE of the starting parameters
	initial_loss: float = math.nan
	optimizer: Optional[AdamState] = field(default=None, repr=False)
	train_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int), repr=False)
	val_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int), repr=False)

	@property
	def final_loss(self) -> float:
		return self.loss_history[-1] if self.loss_history else self.initial_loss


def mse_loss(params: NetParams, X_in: np.ndarray, x_out: np.ndarray) -> float:
	"""(1/J) Σ ‖model_forward(X_in_j) - x_out_j‖²"""
	X_in = np.atleast_2d(np.asarray(X_in, dtype=float))
	x_out = np.atleast_2d(np.asarray(x_out, dtype=float))
	if len(X_in) == 0:
		raise ContractViolation("batch: must be nonempty")
	if len(X_in) != len(x_out):
		raise ContractViolation(f"x_out: expected {len(X_in)} rows, got {len(x_out)}")
	r = model_forward(params, X_in) - x_out
	return float(np.sum(r * r) / len(X_in))


def adam_update(
		values: Sequence[np.ndarray],
		grads: Sequence[np.ndarray],
		m: Sequence[np.ndarray],
		v: Sequence[np.ndarray],
		step: int,
		lr: float,
		betas: Tuple[float, float],
		eps: float,
) -> Tuple[List[np.ndarray], List[np.ndarray], List[np.ndarray], int]:
	"""Bias-corrected Adam on plain arrays; returns (values, m, v, step)"""
	beta_1, beta_2 = betas
	step += 1
	new_values, new_m, new_v = [], [], []
	for w, g, m_i, v_i in zip(values, grads, m, v):
		if g.shape != w.shape:
			raise ContractViolation(f"grads: shape {g.shape} does not match parameter shape {w.shape}")
		m_i = beta_1 * m_i + (1 - beta_1) * g
		v_i = beta_2 * v_i + (1 - beta_2) * g ** 2
		m_hat = m_i / (1 - beta_1 ** step)
		v_hat = v_i / (1 - beta_2 ** step)
		new_values.append(w - lr * m_hat / (np.sqrt(v_hat) + eps))
		new_m.append(m_i)
		new_v.append(v_i)
	return new_values, new_m, new_v, step


def adam_step(
		state: AdamState,
		grads: Sequence[np.ndarray],
		lr: float,
		betas: Tuple[float, float] = (0.9, 0.999),
		eps: float = 1e-8,
) -> AdamState:
	if len(grads) != len(state.params.weights):
		raise ContractViolation(f"grads: expected {len(state.params.weights)} arrays, got {len(grads)}")
	weights, m, v, step = adam_update(state.params.weights, grads, state.m, state.v, state.step, lr, betas, eps)
	return AdamState(params=state.params.with_weights(weights), m=tuple(m), v=tuple(v), step=step)


def split_indices(n: int, validation_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
	"""Seeded disjoint (train, validation) index split"""
	n_val = int(math.floor(validation_fraction * n))
	if n - n_val < 1:
		raise ContractViolation(f"validation_fraction: {validation_fraction} leaves no training samples out of {n}")
	perm = np.random.default_rng([seed, 0xF10]).permutation(n)
	return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(
		params: NetParams,
		dataset: TrainingSet,
		cfg: Optional[TrainConfig] = None,
		state: Optional[AdamState] = None,
) -> TrainReport:
	cfg = cfg or TrainConfig()
	if params.m != dataset.layout.m or params.d != dataset.layout.d:
		raise ContractViolation(
			f"params: network maps {params.m} -> {params.d}, dataset needs {dataset.layout.m} -> {dataset.layout.d}"
		)
	if params.normalizer is None and cfg.normalize_inputs:
		params = params.with_normalizer(dataset.coverage)

	X_all = dataset.inputs()
	Y_all = dataset.x_out
	train_idx, val_idx = split_indices(len(dataset), cfg.validation_fraction, cfg.seed)
	X_tr, Y_tr = X_all[train_idx], Y_all[train_idx]
	X_val, Y_val = X_all[val_idx], Y_all[val_idx]

	state = AdamState.fresh(params) if state is None else replace(state, params=params)
	initial_loss = mse_loss(params, X_tr, Y_tr)
	loss_history: List[float] = []
	val_history: List[float] = []
	report_every = max(1, cfg.epochs // 10)

	with timed(logger, "train", epochs=cfg.epochs, samples=len(train_idx)):
		for epoch in range(cfg.epochs):
			order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_idx))
			for batch, lo in enumerate(range(0, len(order), cfg.batch_size)):
				idx = order[lo:lo + cfg.batch_size]
				X_b, Y_b = X_tr[idx], Y_tr[idx]
				try:
					pred, cache = model_forward(state.params, X_b, return_cache=True)
				except NumericalError as exc:
					raise TrainingDivergedError(exc.detail, epoch=epoch, batch=batch) from exc
				residual = pred - Y_b
				batch_loss = float(np.sum(residual * residual) / len(idx))
				if not math.isfinite(batch_loss):
					raise TrainingDivergedError(
						f"non-finite loss at epoch {epoch}, batch {batch}", epoch=epoch, batch=batch
					)
				grads = [g * (2.0 / len(idx)) for g in model_backward(state.params, X_b, residual, cache)]
				state = adam_step(state, grads, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps)

			try:
				train_loss = mse_loss(state.params, X_tr, Y_tr)
				val_loss = mse_loss(state.params, X_val, Y_val) if len(val_idx) else math.nan
			except NumericalError as exc:
				raise TrainingDivergedError(exc.detail, epoch=epoch, batch=-1) from exc
			if not math.isfinite(train_loss):
				raise TrainingDivergedError(f"non-finite training loss after epoch {epoch}", epoch=epoch, batch=-1)
			loss_history.append(train_loss)
			val_history.append(val_loss)
			metrics.training_epochs.inc()
			metrics.training_loss.set(train_loss)
			if (epoch + 1) % report_every == 0 or epoch == cfg.epochs - 1:
				log_event(logger, "epoch finished", epoch=epoch + 1, train_mse=train_loss, val_mse=val_loss)

	return TrainReport(
		loss_history=loss_history,
		val_history=val_history,
		final_params=state.params,
		initial_loss=initial_loss,
		optimizer=state,
		train_indices=train_idx,
		val_indices=val_idx,
	)
