# flowmap/services/health_service.py
import logging
import platform
from typing import Any, Dict

import numpy as np
import psutil

from flowmap.config import settings
from flowmap.core.parallel import worker_count

logger = logging.getLogger(__name__)


def get_environment() -> Dict[str, Any]:
	"""Snapshot of the runtime a command runs in; logged, never written to artifacts"""
	snapshot: Dict[str, Any] = {
		"app": settings.APP_NAME,
		"version": settings.APP_VERSION,
		"python_version": platform.python_version(),
		"numpy_version": np.__version__,
		"platform": platform.platform(),
		"workers": worker_count(),
	}

	# System
	try:
		snapshot["system"] = {
			"cpu_count": psutil.cpu_count(logical=False) or psutil.cpu_count(),
			"memory_percent": psutil.virtual_memory().percent,
			"memory_available_mb": psutil.virtual_memory().available // (1024 * 1024),
		}
	except Exception as e:
		logger.error(f"Failed to get system metrics: {e}")

	return snapshot
