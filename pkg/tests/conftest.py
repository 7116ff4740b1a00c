import logging

import numpy as np
import pytest

from flowmap.schemas.basis import BasisKind, BasisSpec
from flowmap.schemas.experiment import ExperimentConfig
from flowmap.services.dynamics import SystemSpec, linear_scalar


def pytest_addoption(parser):
	parser.addoption("--run-slow", action="store_true", default=False, help="run minutes-long training runs")
	parser.addoption("--run-extended", action="store_true", default=False, help="run the heat-equation pipeline")


def pytest_configure(config):
	config.addinivalue_line("markers", "slow: minutes-long training runs (opt in with --run-slow)")
	config.addinivalue_line("markers", "extended: heat-equation pipeline, tens of minutes (opt in with --run-extended)")


def pytest_collection_modifyitems(config, items):
	for item in items:
		if "slow" in item.keywords and not config.getoption("--run-slow"):
			item.add_marker(pytest.mark.skip(reason="needs --run-slow"))
		if "extended" in item.keywords and not config.getoption("--run-extended"):
			item.add_marker(pytest.mark.skip(reason="needs --run-extended"))


@pytest.fixture(autouse=True)
def propagate_logs():
	"""configure_logging detaches the flowmap logger; reattach it so caplog sees records"""
	yield
	flowmap_logger = logging.getLogger("flowmap")
	flowmap_logger.handlers.clear()
	flowmap_logger.propagate = True
	flowmap_logger.setLevel(logging.NOTSET)


@pytest.fixture
def decay_system() -> SystemSpec:
	"""dx/dt = -x"""
	return SystemSpec(name="decay", d=1, input_arity=0, rhs=lambda x, g: -x)


@pytest.fixture
def zero_system() -> SystemSpec:
	"""f ≡ 0 with one (ignored) input channel"""
	return SystemSpec(name="zero", d=1, input_arity=1, rhs=lambda x, g: np.zeros_like(x))


@pytest.fixture
def scalar_system() -> SystemSpec:
	return linear_scalar()


@pytest.fixture
def lagrange2() -> BasisSpec:
	return BasisSpec(kind=BasisKind.LAGRANGE, degree=2)


@pytest.fixture
def small_config(tmp_path) -> ExperimentConfig:
	"""Linear scalar preset shrunk to run in seconds"""
	return ExperimentConfig(
		preset="linear_scalar",
		dataset={"size": 200, "micro_steps": 10},
		model={"kind": "network", "hidden": [8, 8]},
		train={"epochs": 2, "batch_size": 64},
		scenario={"x0": [2.0], "signal": ["sin(4*t) + 1", "cos(t**2/1000)"], "t_end": 1.0, "delta": 0.1},
		output_dir=str(tmp_path / "run"),
		seed=3,
	)
