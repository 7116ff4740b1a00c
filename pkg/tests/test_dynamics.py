import math

import numpy as np
import pytest

from flowmap.core.exceptions import ConfigError, ContractViolation, NumericalOverflowError, StabilityError
from flowmap.services.dynamics import (
	HeatConfig,
	SystemSpec,
	eval_rhs,
	heat_family,
	heat_grid,
	heat_profile,
	integrate,
	linear_scalar,
	make_heat_system,
	predator_prey,
	rk4_step,
	symbolic_family,
	symbolic_system,
)
from flowmap.services.signals import ExpressionSignal, constant_signal


def test_linear_scalar_rhs():
	"""Test -αx + β with α=1, β=0, x=2"""
	assert eval_rhs(linear_scalar(), np.array([2.0]), np.array([1.0, 0.0]))[0] == -2.0


def test_predator_prey_equilibrium_rhs():
	np.testing.assert_array_equal(eval_rhs(predator_prey(), np.array([1.0, 1.0]), np.array([0.0])), [0.0, 0.0])


def test_rhs_dimension_mismatch_names_argument():
	with pytest.raises(ContractViolation, match="x"):
		eval_rhs(predator_prey(), np.array([1.0]), np.array([0.0]))
	with pytest.raises(ContractViolation, match="gamma_values"):
		eval_rhs(predator_prey(), np.array([1.0, 1.0]), np.array([0.0, 1.0]))


def test_heat_sine_mode_is_eigenvector():
	"""Test the discrete Laplacian eigenpair of the interior sine mode"""
	system = make_heat_system(HeatConfig(n_grid=22))
	assert system.d == 20
	h = 1.0 / 21
	u = np.sin(np.pi * heat_grid(22)[1:-1])
	eigenvalue = -(4.0 / h ** 2) * np.sin(np.pi * h / 2) ** 2
	np.testing.assert_allclose(eval_rhs(system, u, np.array([0.0])), eigenvalue * u, rtol=1e-10, atol=1e-10)


def test_heat_pure_source():
	system = make_heat_system(HeatConfig(mu=1.0, sigma=0.5))
	x_int = heat_grid(22)[1:-1]
	out = eval_rhs(system, np.zeros(20), np.array([1.0]))
	np.testing.assert_allclose(out, np.exp(-((x_int - 1.0) ** 2) / 0.25), rtol=1e-14)


def test_heat_family_matches_single_system():
	family = heat_family(22)
	bound = family.bind({"mu": 0.3, "sigma": 0.2})
	single = make_heat_system(HeatConfig(mu=0.3, sigma=0.2))
	u = np.linspace(0.0, 1.0, 20)
	np.testing.assert_allclose(eval_rhs(bound, u, np.array([0.7])), eval_rhs(single, u, np.array([0.7])))


def test_heat_family_missing_extra():
	with pytest.raises(ContractViolation, match="sigma"):
		heat_family(22).bind({"mu": 0.3})


def test_heat_profile_pads_boundaries():
	states = np.ones((3, 20))
	padded = heat_profile(states)
	assert padded.shape == (3, 22)
	assert np.all(padded[:, 0] == 0.0) and np.all(padded[:, -1] == 0.0)


def test_rk4_zero_dynamics():
	system = SystemSpec(name="zero", d=2, input_arity=0, rhs=lambda x, g: np.zeros_like(x))
	np.testing.assert_array_equal(rk4_step(system, np.array([1.5, -2.0]), 0.0, 0.1), [1.5, -2.0])


def test_rk4_constant_derivative_is_exact():
	system = SystemSpec(name="one", d=1, input_arity=0, rhs=lambda x, g: np.ones_like(x))
	assert rk4_step(system, np.array([0.0]), 0.0, 0.25)[0] == 0.25


def test_rk4_exponential_step(decay_system):
	assert abs(rk4_step(decay_system, np.array([1.0]), 0.0, 0.1)[0] - math.exp(-0.1)) < 1e-7


def test_integrate_exponential(decay_system):
	traj = integrate(decay_system, np.array([1.0]), 0.0, 1.0, 100)
	assert len(traj) == 101
	assert traj.states[0, 0] == 1.0
	assert abs(traj.states[-1, 0] - math.exp(-1.0)) < 1e-9
	np.testing.assert_allclose(np.diff(traj.times), 0.01, rtol=1e-12)


def test_integrate_zero_dynamics():
	system = SystemSpec(name="zero", d=1, input_arity=0, rhs=lambda x, g: np.zeros_like(x))
	traj = integrate(system, np.array([3.0]), 0.0, 1.0, 10)
	assert np.all(traj.states == 3.0)


def test_rk4_convergence_order(decay_system):
	"""Test log2 of successive error ratios stays within 4 ± 0.2"""
	errors = []
	for n in (10, 20, 40):
		final = integrate(decay_system, np.array([1.0]), 0.0, 1.0, n).states[-1, 0]
		errors.append(abs(final - math.exp(-1.0)))
	orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
	assert np.all((orders >= 3.8) & (orders <= 4.2))


def test_integrate_rejects_bad_interval(decay_system):
	with pytest.raises(ContractViolation, match="t1"):
		integrate(decay_system, np.array([1.0]), 1.0, 1.0, 10)
	with pytest.raises(ContractViolation, match="n_steps"):
		integrate(decay_system, np.array([1.0]), 0.0, 1.0, 0)


def test_overflow_carries_time_and_step():
	system = SystemSpec(name="blowup", d=1, input_arity=0, rhs=lambda x, g: x ** 2)
	with pytest.raises(NumericalOverflowError) as exc_info:
		integrate(system, np.array([1e200]), 0.0, 1.0, 10)
	assert exc_info.value.step_index == 0
	assert exc_info.value.t == 0.0


def test_predator_prey_stays_at_equilibrium():
	traj = integrate(predator_prey(), np.array([1.0, 1.0]), 0.0, 10.0, 1000, constant_signal([0.0]))
	assert np.max(np.abs(traj.states - 1.0)) < 1e-8


def test_heat_energy_non_increasing():
	system = make_heat_system(HeatConfig())
	u0 = np.sin(np.pi * heat_grid(22)[1:-1]) + 0.3 * np.sin(5 * np.pi * heat_grid(22)[1:-1])
	traj = integrate(system, u0, 0.0, 0.1, 200, constant_signal([0.0]))
	energy = np.linalg.norm(traj.states, axis=1)
	assert np.all(np.diff(energy) <= 1e-15)


def test_heat_step_above_stability_limit():
	system = make_heat_system(HeatConfig())
	with pytest.raises(StabilityError):
		rk4_step(system, np.zeros(20), 0.0, 0.01, constant_signal([0.0]))


def test_linear_scalar_lipschitz_over_horizon():
	lip = linear_scalar().lipschitz_over(ExpressionSignal(["sin(4*t) + 1", "0"]), 0.0, 5.0)
	assert lip.L2 == 1.0
	assert lip.L1 == pytest.approx(2.0, abs=1e-4)


def test_symbolic_system_with_constants():
	system = symbolic_system("forced_decay", ["x"], ["u"], ["-k*x + u"], extras={"k": 2.0})
	assert eval_rhs(system, np.array([1.0]), np.array([1.0]))[0] == -1.0


def test_symbolic_system_unknown_symbol():
	with pytest.raises(ContractViolation, match="undefined symbols"):
		symbolic_system("bad", ["x"], [], ["-k*x"])


def test_symbolic_system_malformed_rhs():
	with pytest.raises(ConfigError, match="cannot parse"):
		symbolic_system("bad", ["x"], [], ["-x +* 2)"])


def test_malformed_signal_expression():
	with pytest.raises(ConfigError, match="sin\\(4\\*t"):
		ExpressionSignal(["sin(4*t"])


def test_missing_signal_for_driven_system(scalar_system):
	with pytest.raises(ContractViolation, match="signal"):
		rk4_step(scalar_system, np.array([1.0]), 0.0, 0.1)
	with pytest.raises(ContractViolation, match="signal"):
		integrate(scalar_system, np.array([1.0]), 0.0, 1.0, 10)


def test_symbolic_family_batched_bind():
	family = symbolic_family("param_decay", ["x"], [], ["a"], ["-a*x"])
	assert eval_rhs(family.bind({"a": 3.0}), np.array([2.0]), np.zeros(0))[0] == -6.0
	batched = family.bind(np.array([[2.0], [1.0]]))
	out = batched.rhs(np.array([[1.0], [1.0]]), np.zeros((2, 0)))
	np.testing.assert_array_equal(out, [[-2.0], [-1.0]])
