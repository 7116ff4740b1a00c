import json
import logging
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Iterator, Optional

from flowmap.config import Settings, settings as default_settings
from flowmap.monitoring import metrics

_RESERVED = set(logging.LogRecord("", 0, "", 0, "", (), None).__dict__) | {"message", "asctime"}


class JsonLineFormatter(logging.Formatter):
	"""One JSON object per record, structured fields merged at top level"""

	def format(self, record: logging.LogRecord) -> str:
		log_dict = {
			"timestamp": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
			"level": record.levelname,
			"logger": record.name,
			"event": record.getMessage(),
		}
		for key, value in record.__dict__.items():
			if key not in _RESERVED and not key.startswith("_"):
				log_dict[key] = value
		if record.exc_info:
			log_dict["exc_info"] = self.formatException(record.exc_info)
		return json.dumps(log_dict, default=str)


def configure_logging(cfg: Optional[Settings] = None) -> None:
	cfg = cfg or default_settings
	handler = logging.StreamHandler(sys.stderr)
	if cfg.LOG_JSON:
		handler.setFormatter(JsonLineFormatter())
	else:
		handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))

	root = logging.getLogger("flowmap")
	root.handlers.clear()
	root.addHandler(handler)
	root.setLevel(cfg.LOG_LEVEL.upper())
	root.propagate = False


def log_event(logger: logging.Logger, event: str, level: int = logging.INFO, **fields: Any) -> None:
	logger.log(level, event, extra=fields)


@contextmanager
def timed(logger: logging.Logger, operation: str, **fields: Any) -> Iterator[None]:
	start_time = time.perf_counter()
	try:
		yield
	finally:
		duration = time.perf_counter() - start_time
		metrics.operation_duration.labels(operation=operation).observe(duration)
		log_event(logger, f"{operation} finished", duration_seconds=round(duration, 3), **fields)

		# Add performance warning for slow operations
		if duration > default_settings.SLOW_OPERATION_SECONDS:
			logger.warning(f"Slow operation detected: {operation} took {duration:.2f}s")
