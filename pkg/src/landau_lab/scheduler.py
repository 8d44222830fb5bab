"""Scheduling logic for scenario runs."""

from __future__ import annotations

import copy
import logging
from typing import Dict, List

from .persistence import ArtifactStore
from .scenarios import ScenarioGraph, build_run_tasks
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()


class Scheduler:
	"""Synchronous scheduler that seeds the dependency-free scenarios of a run."""

	def __init__(self, store: ArtifactStore) -> None:
		self.store = store

	def schedule_graph(self, graph: ScenarioGraph, run_id: str) -> List[str]:
		"""Validate the graph, persist the run record and enqueue its roots."""

		graph.validate()
		tasks = build_run_tasks(graph, run_id)
		blueprint: Dict[str, dict] = {task["task_id"]: copy.deepcopy(task) for task in tasks}

		runnable: List[dict] = []
		for task in tasks:
			task["graph_blueprint"] = blueprint
			if not task["dependencies"]:
				runnable.append(task)

		LOGGER.info("Scheduling scenario graph %s run %s with %d scenarios", graph.id, run_id, len(tasks))
		self.store.save_graph(graph.id, graph.model_dump_json())
		self.store.save_task_status(
			f"run:{run_id}",
			"scheduled",
			{"graph_id": graph.id, "run_id": run_id, "task_count": len(tasks), "task_ids": [task["task_id"] for task in tasks]},
		)

		for task in runnable:
			LOGGER.debug("Enqueueing initial scenario %s", task["task_id"])
			meta = {"task_id": task["task_id"], "run_id": run_id, "task_run_id": task["task_run_id"]}
			self.store.save_task_status(task["task_run_id"], "queued", meta)
			self.store.push_task_queue(task)
		return [task["task_id"] for task in runnable]
