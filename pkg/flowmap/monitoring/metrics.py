from pathlib import Path
from typing import Union

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

registry = CollectorRegistry()

# Define metrics
samples_generated = Counter(
	'flowmap_samples_generated_total',
	'Training samples produced by reference integration or trajectory pairing',
	registry=registry,
)

samples_dropped = Counter(
	'flowmap_samples_dropped_total',
	'Training samples excluded after integrator overflow',
	registry=registry,
)

training_epochs = Counter(
	'flowmap_training_epochs_total',
	'Completed training epochs',
	registry=registry,
)

training_loss = Gauge(
	'flowmap_training_loss',
	'Training MSE after the most recent epoch',
	registry=registry,
)

rollout_steps = Counter(
	'flowmap_rollout_steps_total',
	'One-step model applications during prediction',
	registry=registry,
)

rollout_out_of_domain = Counter(
	'flowmap_rollout_out_of_domain_total',
	'Prediction steps whose model input left the training coverage box',
	registry=registry,
)

bound_checks = Counter(
	'flowmap_bound_checks_total',
	'Empirical error-bound checks',
	['check', 'result'],
	registry=registry,
)

operation_duration = Histogram(
	'flowmap_operation_duration_seconds',
	'Duration of pipeline operations',
	['operation'],
	buckets=(0.01, 0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0, 1800.0),
	registry=registry,
)


def write_metrics(out_dir: Union[str, Path]) -> Path:
	"""Write the registry in prometheus text format next to the run artifacts"""
	path = Path(out_dir) / "metrics.prom"
	path.parent.mkdir(parents=True, exist_ok=True)
	write_to_textfile(str(path), registry)
	return path
