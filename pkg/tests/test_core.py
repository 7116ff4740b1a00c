import json
import logging

import numpy as np
import pytest

from flowmap.config import Settings
from flowmap.core.exceptions import (
	ConfigError,
	ContractViolation,
	NumericalOverflowError,
	StabilityError,
	TrainingDivergedError,
)
from flowmap.core.logging import JsonLineFormatter, configure_logging, log_event, timed
from flowmap.core.parallel import chunk_bounds, ordered_map, worker_count
from flowmap.monitoring import metrics
from flowmap.services.health_service import get_environment


# =====================================================================
# Errors
# =====================================================================

def test_exit_codes():
	assert ConfigError("x").exit_code == 2
	assert StabilityError("x").exit_code == 2
	assert NumericalOverflowError("x", t=0.0, x=[1.0]).exit_code == 1
	assert isinstance(StabilityError("x"), ValueError)
	assert isinstance(StabilityError("x"), ContractViolation)


def test_overflow_at_step_keeps_state():
	err = NumericalOverflowError("state not finite", t=0.5, x=[np.inf, 1.0]).at_step(7)
	assert err.step_index == 7
	assert err.t == 0.5
	assert "step 7" in err.detail
	payload = err.to_dict()
	assert payload["error"] == "NumericalOverflowError"
	assert payload["x"] == [np.inf, 1.0]


def test_training_diverged_context():
	err = TrainingDivergedError("loss not finite", epoch=3, batch=12)
	assert err.context == {"epoch": 3, "batch": 12}


# =====================================================================
# Logging
# =====================================================================

def test_json_lines_merge_fields():
	record = logging.LogRecord("flowmap.test", logging.INFO, __file__, 1, "pairs generated", (), None)
	record.n_samples = 200
	line = json.loads(JsonLineFormatter().format(record))
	assert line["event"] == "pairs generated"
	assert line["level"] == "INFO"
	assert line["n_samples"] == 200


def test_configure_logging_writes_stderr(capsys):
	configure_logging(Settings(LOG_JSON=True, LOG_LEVEL="INFO"))
	log_event(logging.getLogger("flowmap.test"), "hello", seed=4)
	captured = capsys.readouterr()
	assert captured.out == ""
	line = json.loads(captured.err.strip().splitlines()[-1])
	assert line["event"] == "hello"
	assert line["seed"] == 4


def test_timed_records_duration(caplog):
	caplog.set_level(logging.INFO, logger="flowmap")
	with timed(logging.getLogger("flowmap.test"), "unit", tag="a"):
		pass
	record = next(r for r in caplog.records if r.getMessage() == "unit finished")
	assert record.tag == "a"
	assert record.duration_seconds >= 0


# =====================================================================
# Parallel map, metrics, environment
# =====================================================================

def test_chunk_bounds_cover_items():
	chunks = chunk_bounds(10, 4)
	assert [list(c) for c in chunks] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
	assert chunk_bounds(0, 4) == []


@pytest.mark.parametrize("workers", [1, 3])
def test_ordered_map_keeps_order(workers):
	assert ordered_map(lambda v: v * v, list(range(20)), workers=workers) == [v * v for v in range(20)]


def test_worker_count_prefers_request():
	assert worker_count(5) == 5
	assert worker_count() >= 1


def test_write_metrics(tmp_path):
	metrics.samples_generated.inc(3)
	path = metrics.write_metrics(tmp_path)
	assert path.name == "metrics.prom"
	assert "flowmap_samples_generated_total" in path.read_text()


def test_environment_snapshot():
	snapshot = get_environment()
	assert snapshot["app"] == "flowmap"
	assert snapshot["workers"] >= 1
	assert "python_version" in snapshot
