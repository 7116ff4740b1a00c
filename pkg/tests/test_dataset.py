import numpy as np
import pytest

from flowmap.core.exceptions import ContractViolation
from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.schemas.dataset import DatasetMeta, InputLayout, SamplingDomains
from flowmap.services.dataset import (
	InputBatch,
	TrainingSet,
	TrajectoryRecord,
	assemble_input,
	generate_pairs,
	layout_for,
	noise_inject,
	pairs_from_trajectories,
	sample_inputs,
)
from flowmap.services.dynamics import SystemSpec, Trajectory, heat_family
from flowmap.services.signals import constant_signal

TAYLOR0 = BasisSpec(kind=BasisKind.TAYLOR, degree=0)


def scalar_domains(I_Delta=(0.05, 0.2)) -> SamplingDomains:
	"""Constant inputs α in [0.5, 2], β in [-1, 1]"""
	return SamplingDomains(I_x=[(-3.0, 3.0)], I_Gamma=[[(0.5, 2.0)], [(-1.0, 1.0)]], I_Delta=I_Delta)


def scalar_closed_form(x, alpha, beta, delta):
	ratio = beta / alpha
	return ratio + (x - ratio) * np.exp(-alpha * delta)


# =====================================
# Sampling
# =====================================

def test_degenerate_state_interval():
	domains = SamplingDomains(I_x=[(0.5, 0.5)], I_Gamma=[[(-1.0, 1.0)]], I_Delta=(0.1, 0.1))
	batch = sample_inputs(domains, 50, seed=1)
	assert np.all(batch.x == 0.5)
	assert np.all(batch.delta == 0.1)
	assert batch.gamma.shape == (50, 1, 1)


def test_uniform_statistics():
	domains = SamplingDomains(I_x=[(-2.0, 2.0)], I_Gamma=[[(0.0, 1.0)]], I_Delta=(0.05, 0.15))
	batch = sample_inputs(domains, 20000, seed=7)
	assert abs(batch.x.mean()) < 0.05
	assert batch.x.var() == pytest.approx(16.0 / 12.0, rel=0.05)
	assert batch.x.min() >= -2.0 and batch.x.max() <= 2.0
	assert batch.delta.min() >= 0.05 and batch.delta.max() <= 0.15


def test_sampling_is_seeded():
	domains = scalar_domains()
	first = sample_inputs(domains, 100, seed=42)
	second = sample_inputs(domains, 100, seed=42)
	other = sample_inputs(domains, 100, seed=43)
	np.testing.assert_array_equal(first.x, second.x)
	np.testing.assert_array_equal(first.gamma, second.gamma)
	assert not np.array_equal(first.x, other.x)


def test_draws_do_not_depend_on_batch_size():
	domains = scalar_domains()
	short = sample_inputs(domains, 10, seed=5)
	long = sample_inputs(domains, 25, seed=5)
	np.testing.assert_array_equal(short.x, long.x[:10])
	np.testing.assert_array_equal(short.delta, long.delta[:10])


def test_sampling_rejects_empty_batch():
	with pytest.raises(ContractViolation):
		sample_inputs(scalar_domains(), 0, seed=1)


# =====================================
# Pair generation
# =====================================

def test_zero_dynamics_gives_identity(zero_system, lagrange2):
	domains = SamplingDomains(I_x=[(-1.0, 1.0)], I_Gamma=[[(-1.0, 1.0)] * 3], I_Delta=(0.05, 0.2))
	dataset = generate_pairs(zero_system, sample_inputs(domains, 64, seed=2), lagrange2)
	np.testing.assert_array_equal(dataset.x_out, dataset.x_in)
	assert dataset.layout.m == 1 + 3 + 1


def test_matches_closed_form_with_constant_inputs(scalar_system):
	dataset = generate_pairs(scalar_system, sample_inputs(scalar_domains(), 500, seed=9), TAYLOR0, micro_steps=100)
	expected = scalar_closed_form(dataset.x_in[:, 0], dataset.gamma[:, 0], dataset.gamma[:, 1], dataset.delta)
	np.testing.assert_allclose(dataset.x_out[:, 0], expected, atol=1e-9)


def test_micro_step_refinement_converges(scalar_system):
	inputs = sample_inputs(scalar_domains(I_Delta=(0.01, 0.05)), 200, seed=4)
	coarse = generate_pairs(scalar_system, inputs, TAYLOR0, micro_steps=20)
	fine = generate_pairs(scalar_system, inputs, TAYLOR0, micro_steps=40)
	assert np.max(np.abs(coarse.x_out - fine.x_out)) < 1e-10


def test_worker_count_does_not_change_results(scalar_system):
	inputs = sample_inputs(scalar_domains(), 3000, seed=12)
	serial = generate_pairs(scalar_system, inputs, TAYLOR0, workers=1)
	threaded = generate_pairs(scalar_system, inputs, TAYLOR0, workers=4)
	np.testing.assert_array_equal(serial.x_out, threaded.x_out)


def test_overflowing_samples_are_dropped(caplog):
	system = SystemSpec(name="half_nan", d=1, input_arity=0, rhs=lambda x, g: np.where(x > 0, np.nan, 0.0))
	domains = SamplingDomains(I_x=[(-1.0, 1.0)], I_Gamma=[], I_Delta=(0.1, 0.1))
	inputs = sample_inputs(domains, 400, seed=6)
	dataset = generate_pairs(system, inputs, TAYLOR0)
	positives = int(np.sum(inputs.x[:, 0] > 0))
	assert dataset.meta.dropped == positives
	assert len(dataset) == 400 - positives
	assert np.all(dataset.x_in <= 0)
	assert "samples dropped" in caplog.text


def test_all_samples_overflowing():
	system = SystemSpec(name="all_nan", d=1, input_arity=0, rhs=lambda x, g: np.full_like(x, np.nan))
	domains = SamplingDomains(I_x=[(0.5, 1.0)], I_Gamma=[], I_Delta=(0.1, 0.1))
	with pytest.raises(ContractViolation, match="overflowed"):
		generate_pairs(system, sample_inputs(domains, 20, seed=1), TAYLOR0)


def test_fixed_delta_layout(scalar_system):
	fixed = sample_inputs(scalar_domains(I_Delta=(0.1, 0.1)), 20, seed=3)
	dataset = generate_pairs(scalar_system, fixed, TAYLOR0, include_delta=False)
	assert dataset.layout.fixed_delta == 0.1
	assert dataset.layout.m == 3
	assert dataset.inputs().shape == (20, 3)

	with pytest.raises(ContractViolation, match="degenerate"):
		generate_pairs(scalar_system, sample_inputs(scalar_domains(), 20, seed=3), TAYLOR0, include_delta=False)


def test_gamma_shape_mismatch(scalar_system, lagrange2):
	with pytest.raises(ContractViolation, match="Γ"):
		generate_pairs(scalar_system, sample_inputs(scalar_domains(), 5, seed=1), lagrange2)


# =====================================
# Trajectory pairs
# =====================================

def exponential_trajectory(n_points: int, delta: float = 0.1) -> Trajectory:
	times = np.arange(n_points) * delta
	return Trajectory(times=times, states=np.exp(-times))


def test_pair_count_over_trajectories():
	signal = constant_signal([1.0, 0.0])
	trajs = [(exponential_trajectory(n), signal) for n in (2, 3, 4)]
	dataset = pairs_from_trajectories(trajs, TAYLOR0)
	assert len(dataset) == 6
	assert dataset.meta.source == "trajectories"


def test_trajectory_pairs_agree_with_reintegration(scalar_system):
	traj = exponential_trajectory(11)
	dataset = pairs_from_trajectories([TrajectoryRecord(traj, constant_signal([1.0, 0.0]))], TAYLOR0)
	assert len(dataset) == 10
	np.testing.assert_allclose(dataset.gamma, np.tile([1.0, 0.0], (10, 1)))

	inputs = InputBatch(
		x=dataset.x_in,
		gamma=dataset.gamma.reshape(10, 2, 1),
		extra=np.zeros((10, 0)),
		delta=dataset.delta,
	)
	regenerated = generate_pairs(scalar_system, inputs, TAYLOR0, micro_steps=100)
	np.testing.assert_allclose(regenerated.x_out, dataset.x_out, atol=1e-9)


def test_max_pairs_subsamples():
	signal = constant_signal([1.0, 0.0])
	full = pairs_from_trajectories([(exponential_trajectory(21), signal)], TAYLOR0)
	part = pairs_from_trajectories([(exponential_trajectory(21), signal)], TAYLOR0, max_pairs=5, seed=1)
	assert len(part) == 5
	assert set(part.x_in[:, 0]).issubset(set(full.x_in[:, 0]))


def test_short_trajectory_is_named():
	signal = constant_signal([1.0, 0.0])
	trajs = [(exponential_trajectory(3), signal), (exponential_trajectory(1), signal)]
	with pytest.raises(ContractViolation, match=r"trajs\[1\]"):
		pairs_from_trajectories(trajs, TAYLOR0)


# =====================================
# Input assembly
# =====================================

def test_assemble_input_order():
	layout = InputLayout(d=1, input_arity=1, n_b=3)
	X = assemble_input(layout, [2.0], np.array([[1.0, 0.0, 0.0]]), 0.1)
	np.testing.assert_array_equal(X, [2.0, 1.0, 0.0, 0.0, 0.1])


def test_assemble_input_wrong_gamma():
	layout = InputLayout(d=1, input_arity=1, n_b=3)
	with pytest.raises(ContractViolation, match="gamma"):
		assemble_input(layout, [2.0], np.zeros(2), 0.1)


def test_heat_family_layout(lagrange2):
	layout = layout_for(heat_family(22), lagrange2)
	assert layout.extra_names == ["mu", "sigma"]
	assert layout.m == 26


# =====================================
# Noise
# =====================================

def test_noise_injection_statistics():
	J = 20000
	layout = InputLayout(d=1, input_arity=0, n_b=1)
	clean = TrainingSet(
		layout=layout,
		x_in=np.zeros((J, 1)),
		gamma=np.zeros((J, 0)),
		extra=np.zeros((J, 0)),
		delta=np.full(J, 0.1),
		x_out=np.zeros((J, 1)),
		meta=DatasetMeta(system="zero", basis=TAYLOR0, micro_steps=1),
	)
	noisy = noise_inject(clean, 0.1, seed=8)
	assert noisy.x_in.std() == pytest.approx(0.1, rel=0.05)
	assert noisy.x_out.std() == pytest.approx(0.1, rel=0.05)
	assert noisy.meta.noise_std == 0.1
	assert noise_inject(clean, 0.0) is clean
	with pytest.raises(ContractViolation):
		noise_inject(clean, -1.0)
