"""Runner that executes scheduled scenario tasks."""

from __future__ import annotations

import copy
import logging
from typing import Any, Callable, Dict, List

from .executor import execute_scenario
from .persistence import ArtifactStore
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()


class Runner:
	"""Pops queued scenarios, executes them and releases their downstream tasks."""

	def __init__(
		self,
		store: ArtifactStore,
		context: Any,
		executor: Callable[[Dict[str, Any], Any], Dict[str, Any]] = execute_scenario,
	) -> None:
		self.store = store
		self.context = context
		self.executor = executor
		self.executed: List[str] = []

	def run(self, loop_forever: bool = False, timeout: float = 0) -> List[str]:
		"""Drain the queue; returns executed scenario ids in execution order."""

		LOGGER.info("Runner started; loop_forever=%s", loop_forever)
		try:
			while True:
				payload = self.store.pop_task_queue(timeout=timeout)
				if not payload:
					if not loop_forever:
						break
					continue

				LOGGER.info("Executing scenario %s", payload["task_run_id"])
				self._process_task(payload)
		except KeyboardInterrupt:  # pragma: no cover - manual interruption
			LOGGER.info("Runner shutdown requested")
		return list(self.executed)

	def _process_task(self, payload: Dict[str, Any]) -> None:
		task_run_id = payload["task_run_id"]
		self._record_status(payload, "running", {})

		result = self.executor(payload, self.context)
		self.executed.append(payload["task_id"])
		meta = {key: value for key, value in result.items() if key not in {"status", "output"}}
		self._record_status(payload, result["status"], meta)

		if result["status"] == "success":
			LOGGER.info("Scenario %s finished in %s", payload["task_id"], result["duration"])
			self._schedule_downstream(payload)
			return
		LOGGER.error("Scenario %s failed after %s; downstream scenarios are skipped", task_run_id, result["duration"])
		for child in payload.get("downstream", []):
			self._record_status({**payload, "task_id": child, "task_run_id": f"{payload['run_id']}:{child}"}, "skipped", {})

	def _schedule_downstream(self, payload: Dict[str, Any]) -> None:
		for child in payload.get("downstream", []):
			child_payload = self._build_child_payload(payload, child)
			if not child_payload:
				continue
			if not self._dependencies_satisfied(payload["run_id"], child_payload):
				continue
			if self._already_scheduled(child_payload):
				continue
			LOGGER.debug("Enqueueing downstream scenario %s", child)
			self._mark_queued(child_payload)
			self.store.push_task_queue(child_payload)

	def _build_child_payload(self, parent_payload: Dict[str, Any], child_id: str) -> Dict[str, Any] | None:
		blueprint = parent_payload.get("graph_blueprint")
		if not blueprint or child_id not in blueprint:
			LOGGER.debug("Blueprint does not contain scenario %s", child_id)
			return None
		child_payload = copy.deepcopy(blueprint[child_id])
		child_payload["graph_blueprint"] = blueprint
		return child_payload

	def _dependencies_satisfied(self, run_id: str, child_payload: Dict[str, Any]) -> bool:
		for dep in child_payload.get("dependencies", []):
			if self.store.get_task_status(f"{run_id}:{dep}").get("status") != "success":
				return False
		return True

	def _record_status(self, payload: Dict[str, Any], status: str, meta: Dict[str, Any]) -> None:
		enriched_meta = {**meta, "task_id": payload["task_id"], "run_id": payload["run_id"]}
		self.store.save_task_status(payload["task_run_id"], status, enriched_meta)

	def _already_scheduled(self, payload: Dict[str, Any]) -> bool:
		status = self.store.get_task_status(payload["task_run_id"])
		return status.get("status") in {"queued", "running", "success", "failed"}

	def _mark_queued(self, payload: Dict[str, Any]) -> None:
		meta = {"task_id": payload["task_id"], "run_id": payload["run_id"], "task_run_id": payload["task_run_id"]}
		self.store.save_task_status(payload["task_run_id"], "queued", meta)
