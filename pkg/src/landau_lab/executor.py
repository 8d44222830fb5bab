"""Timed execution of one scenario handler."""

from __future__ import annotations

import logging
import time
import traceback
from typing import Any, Dict

from .utils import human_readable_duration, import_handler, setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()


def execute_scenario(task_payload: Dict[str, Any], context: Any) -> Dict[str, Any]:
	"""Run ``handler(context)`` in-process and return execution metadata.

	Handlers share the run context (solved fields, the store), so they run in
	the calling process; exceptions are captured into a ``failed`` status.
	"""

	handler_path = task_payload.get("handler")
	if not handler_path:
		raise ValueError("Task payload must contain 'handler'")

	started = time.monotonic()
	try:
		handler = import_handler(handler_path)
		output = handler(context)
	except Exception:
		LOGGER.error("Scenario %s raised", task_payload.get("task_id"), exc_info=True)
		return {
			"status": "failed",
			"output": None,
			"stderr": traceback.format_exc(),
			"duration": human_readable_duration(time.monotonic() - started),
			"seconds": time.monotonic() - started,
		}
	return {
		"status": "success",
		"output": output,
		"stderr": "",
		"duration": human_readable_duration(time.monotonic() - started),
		"seconds": time.monotonic() - started,
	}
