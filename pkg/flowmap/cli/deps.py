"""Options, config loading and error handling shared by every command"""
import json
import logging
from pathlib import Path
from typing import Callable, Optional

import click
from pydantic import ValidationError

from flowmap.config import settings
from flowmap.core.exceptions import ConfigError, FlowmapError
from flowmap.core.logging import configure_logging, log_event, timed
from flowmap.monitoring.metrics import write_metrics
from flowmap.schemas.experiment import ExperimentConfig
from flowmap.services.experiment_service import ExperimentService
from flowmap.services.health_service import get_environment

logger = logging.getLogger(__name__)

config_option = click.option(
	"--config", "config_path", required=True,
	type=click.Path(dir_okay=False, path_type=Path),
	help="Experiment configuration (JSON).",
)
out_option = click.option(
	"--out", "out_dir", default=None,
	type=click.Path(file_okay=False, path_type=Path),
	help="Output directory; overrides output_dir from the config.",
)
seed_option = click.option(
	"--seed", default=None, type=click.IntRange(0, 2 ** 64 - 1),
	help="Seed; overrides seed from the config.",
)


def common_options(fn: Callable) -> Callable:
	return config_option(out_option(seed_option(fn)))


def load_config(config_path: Path, out_dir: Optional[Path] = None, seed: Optional[int] = None) -> ExperimentConfig:
	try:
		raw = json.loads(Path(config_path).read_text())
	except FileNotFoundError:
		raise ConfigError(f"config file not found: {config_path}") from None
	except json.JSONDecodeError as e:
		raise ConfigError(f"invalid JSON in {config_path}: {e}") from None
	if not isinstance(raw, dict):
		raise ConfigError(f"{config_path}: the config must be a JSON object")
	if out_dir is not None:
		raw["output_dir"] = str(out_dir)
	if seed is not None:
		raw["seed"] = seed
	try:
		return ExperimentConfig(**raw)
	except ValidationError as e:
		raise ConfigError(f"invalid config {config_path}:\n{e}") from None


def get_experiment(config_path: Path, out_dir: Optional[Path] = None, seed: Optional[int] = None) -> ExperimentService:
	return ExperimentService(load_config(config_path, out_dir, seed))


def run_pipeline(command: str, action: Callable[[], Optional[Path]]) -> None:
	"""Run ``action`` under logging and metrics; FlowmapError becomes its exit status.

	``action`` returns the output directory so the metrics textfile lands next
	to the artifacts.
	"""
	configure_logging(settings)
	log_event(logger, "command started", command=command, environment=get_environment())
	out_dir: Optional[Path] = None
	try:
		with timed(logger, command):
			out_dir = action()
	except FlowmapError as e:
		log_event(logger, "command failed", level=logging.ERROR, command=command, **e.to_dict())
		click.echo(f"Error: {e.detail}", err=True)
		raise SystemExit(e.exit_code)
	finally:
		if settings.EXPOSE_METRICS and out_dir is not None:
			write_metrics(out_dir)
