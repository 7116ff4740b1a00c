import math

import numpy as np
import pytest

from flowmap.core.exceptions import ContractViolation, UnsupportedSystemError
from flowmap.schemas.analysis import BoundInputs
from flowmap.schemas.base import Box
from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.services.analysis import (
	appendix_bound,
	appendix_bound_variable,
	bound_curve,
	bound_row,
	check_gronwall,
	check_rollout_bound,
	combined_bound,
	estimate_lipschitz_model,
	estimate_lipschitz_phi,
	input_bound,
	rollout_bound,
)
from flowmap.schemas.dataset import SamplingDomains
from flowmap.services.dynamics import linear_scalar, predator_prey
from flowmap.services.rollout import OracleModel
from flowmap.services.signals import ExpressionSignal

DECAY = math.exp(-0.1)


def decay_map(X):
	"""Exact one-step map of dx/dt = -x with δ = 0.1"""
	return np.asarray(X) * DECAY


# =====================================
# Calculators
# =====================================

def test_input_bound_value():
	assert input_bound(1.0, 2.0, 0.05, 2.0) == pytest.approx(0.2 * math.e ** 2, rel=1e-12)
	assert input_bound(1.0, 2.0, 0.05, 2.0) == pytest.approx(1.4778, abs=1e-4)


def test_rollout_bound_values():
	assert rollout_bound(2.0, 1.0, 3) == pytest.approx(7.0, rel=1e-15)
	assert rollout_bound(1.0, 0.1, 5) == pytest.approx(0.5, rel=1e-15)
	assert rollout_bound(0.5, 1.0, 0) == 0.0


def test_rollout_bound_is_continuous_at_one():
	near = rollout_bound(1.0 + 1e-9, 0.1, 5)
	assert near == pytest.approx(rollout_bound(1.0, 0.1, 5), rel=1e-6)


def test_appendix_bound_value():
	expected = (math.e - 1) / (math.exp(0.1) - 1) * 0.01
	assert appendix_bound(1.0, 0.1, 10, 0.01) == pytest.approx(expected, rel=1e-12)
	assert appendix_bound(1.0, 0.1, 10, 0.01) == pytest.approx(0.1634, abs=1e-4)
	assert appendix_bound(0.0, 0.1, 10, 0.01) == pytest.approx(0.1)


@pytest.mark.parametrize("L1, delta, n", [(1.0, 0.1, 10), (0.3, 0.05, 40), (2.5, 0.15, 7)])
def test_appendix_bound_agrees_with_rollout_bound(L1, delta, n):
	L_phi = math.exp(L1 * delta)
	assert appendix_bound(L1, delta, n, 0.01) == pytest.approx(rollout_bound(L_phi, 0.01, n), rel=1e-12)


def test_variable_step_bound_reduces_to_uniform():
	assert appendix_bound_variable(1.0, [0.1] * 10, 0.01) == pytest.approx(appendix_bound(1.0, 0.1, 10, 0.01), rel=1e-12)
	assert appendix_bound_variable(1.0, [], 0.01) == 0.0


def test_bounds_are_monotone():
	ns = [rollout_bound(0.9, 1e-3, n) for n in range(50)]
	ts = [input_bound(1.0, 1.0, 1e-3, t) for t in np.linspace(0.0, 5.0, 50)]
	assert np.all(np.diff(ns) >= 0)
	assert np.all(np.diff(ts) >= 0)


def test_negative_constants_are_rejected():
	with pytest.raises(ContractViolation, match="eta"):
		input_bound(1.0, 1.0, -0.1, 1.0)
	with pytest.raises(ContractViolation, match="E"):
		rollout_bound(0.5, -1.0, 3)


def test_combined_bound_and_row():
	inputs = BoundInputs(L1=1.0, L2=2.0, eta=0.05, L_phi=2.0, E=1.0, delta=0.1, n=3, t=2.0)
	assert combined_bound(inputs) == pytest.approx(0.2 * math.e ** 2 + 7.0, rel=1e-12)
	row = bound_row(inputs)
	assert row.rollout_bound == pytest.approx(7.0)
	assert row.combined_bound == pytest.approx(row.input_bound + row.rollout_bound)


def test_bound_curve_over_grid():
	inputs = BoundInputs(L1=1.0, L2=1.0, eta=1e-3, L_phi=0.9, E=1e-4)
	curve = bound_curve(inputs, np.linspace(0.0, 1.0, 11))
	assert len(curve) == 11
	assert curve[0] == 0.0
	assert curve[-1] == pytest.approx(combined_bound(inputs.model_copy(update={"t": 1.0, "n": 10})))


# =====================================
# Gronwall check
# =====================================

def test_gronwall_holds_for_cosine_forcing(scalar_system):
	basis = BasisSpec(kind=BasisKind.TAYLOR, degree=1)
	report = check_gronwall(scalar_system, ExpressionSignal(["1", "cos(t)"]), basis, T=5.0, delta=0.1)
	assert report.satisfied
	assert len(report.times) == 50 * 10 + 1
	assert report.L1 == pytest.approx(1.0, abs=1e-12)
	assert 0 < report.eta < 1e-2


def test_gronwall_gap_vanishes_for_representable_inputs(scalar_system):
	basis = BasisSpec(kind=BasisKind.TAYLOR, degree=1)
	report = check_gronwall(scalar_system, ExpressionSignal(["1", "0.5*t"]), basis, T=2.0, delta=0.1, x0=[1.0])
	assert report.eta < 1e-12
	assert max(report.measured) < 1e-12
	assert report.satisfied


def test_higher_degree_tightens_gronwall(scalar_system):
	signal = ExpressionSignal(["1", "cos(t)"])
	k1 = check_gronwall(scalar_system, signal, BasisSpec(kind=BasisKind.TAYLOR, degree=1), T=5.0, delta=0.1)
	k2 = check_gronwall(scalar_system, signal, BasisSpec(kind=BasisKind.TAYLOR, degree=2), T=5.0, delta=0.1)
	assert k2.eta < k1.eta
	assert max(k2.measured) < max(k1.measured)
	assert k2.satisfied


def test_gronwall_needs_lipschitz_constants():
	with pytest.raises(UnsupportedSystemError):
		check_gronwall(predator_prey(), ExpressionSignal(["0"]), BasisSpec(kind=BasisKind.TAYLOR, degree=1), T=1.0, delta=0.1)


# =====================================
# Rollout bound check
# =====================================

def test_rollout_check_with_exact_lipschitz():
	report = check_rollout_bound(decay_map, [1.0], n=100, E=1e-3, L_phi=DECAY)
	assert report.satisfied
	assert not report.L_phi_estimated
	expected = (1 - DECAY ** 100) / (1 - DECAY) * 1e-3
	assert report.bound[-1] == pytest.approx(expected, rel=1e-12)


def test_rollout_check_without_noise():
	report = check_rollout_bound(decay_map, [1.0], n=20, E=0.0, L_phi=DECAY)
	assert report.satisfied
	assert max(report.measured) == 0.0


def test_aligned_noise_approaches_bound():
	report = check_rollout_bound(decay_map, [1.0], n=100, E=1e-3, L_phi=DECAY, noise="aligned")
	assert report.satisfied
	assert report.max_ratio >= 0.5


def test_rollout_check_estimates_lipschitz():
	report = check_rollout_bound(decay_map, [2.0, -1.0], n=50, E=1e-4)
	assert report.L_phi_estimated
	assert report.L_phi == pytest.approx(1.1 * DECAY, rel=1e-6)
	assert report.satisfied


def test_rollout_check_rejects_unknown_noise():
	with pytest.raises(ContractViolation, match="noise"):
		check_rollout_bound(decay_map, [1.0], n=5, E=1e-3, L_phi=DECAY, noise="gaussian")


def test_estimate_lipschitz_of_linear_map():
	box = Box(lo=[-1.0, -1.0], hi=[1.0, 1.0])
	assert estimate_lipschitz_phi(lambda X: 0.5 * X, box, samples=500) == pytest.approx(0.55, rel=1e-6)


def test_model_lipschitz_maximized_over_parameters():
	"""One-step map of dx/dt = -a x + b is x e^{-aδ} + c, so the sup sits at the smallest a and δ"""
	domains = SamplingDomains(I_x=[(-2.0, 2.0)], I_Gamma=[[(0.5, 2.0)], [(-1.0, 1.0)]], I_Delta=(0.05, 0.15))
	oracle = OracleModel(linear_scalar(), BasisSpec(kind=BasisKind.TAYLOR, degree=0), micro_steps=20)
	estimate = estimate_lipschitz_model(oracle, domains, samples=2000, inflation=1.0, seed=4)
	assert math.exp(-0.5 * 0.05 * 1.3) <= estimate <= math.exp(-0.5 * 0.05) * (1 + 1e-8)
