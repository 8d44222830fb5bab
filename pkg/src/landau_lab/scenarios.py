"""Scenario task graph: models, validation and per-run payloads."""

from __future__ import annotations

from collections import deque
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class CycleError(ValueError):
	"""Raised when a scenario graph contains a circular dependency."""


class ScenarioTask(BaseModel):
	"""One scenario of a run, executed through a dotted handler path."""

	id: str
	name: str
	handler: str
	dependencies: List[str] = Field(default_factory=list)
	metadata: Dict[str, Any] = Field(default_factory=dict)

	@model_validator(mode="after")
	def _no_self_dependency(self) -> "ScenarioTask":
		if ":" not in self.handler:
			raise ValueError("handler must be a 'module:function' path")
		for dep in self.dependencies:
			if dep == self.id:
				raise ValueError("Scenario cannot depend on itself")
		return self


class ScenarioGraph(BaseModel):
	"""Directed acyclic graph of the scenarios of one run."""

	id: str
	name: str
	tasks: Dict[str, ScenarioTask]

	def validate(self) -> None:
		"""Validate dependencies and ensure the graph is acyclic."""

		task_ids = set(self.tasks)
		for task in self.tasks.values():
			missing = set(task.dependencies) - task_ids
			if missing:
				raise ValueError(f"Scenario '{task.id}' references undefined dependencies: {sorted(missing)}")

		if len(self._kahn_order()) != len(self.tasks):
			raise CycleError(f"Scenario graph '{self.id}' contains a cycle")

	def _kahn_order(self) -> List[str]:
		indegree: Dict[str, int] = {task_id: len(task.dependencies) for task_id, task in self.tasks.items()}
		queue = deque(task_id for task_id, degree in indegree.items() if degree == 0)
		order: List[str] = []
		while queue:
			node = queue.popleft()
			order.append(node)
			for neighbor in self.downstream(node):
				indegree[neighbor] -= 1
				if indegree[neighbor] == 0:
					queue.append(neighbor)
		return order

	def downstream(self, task_id: str) -> List[str]:
		return [task.id for task in self.tasks.values() if task_id in task.dependencies]

	def topological_sort(self) -> List[str]:
		"""Return scenarios ordered by their prerequisites."""

		order = self._kahn_order()
		if len(order) != len(self.tasks):
			raise CycleError("Cycle detected during topological sort")
		return order

	def closure(self, selected: List[str]) -> "ScenarioGraph":
		"""Sub-graph of ``selected`` plus everything they depend on."""

		keep: set = set()
		pending = list(selected)
		while pending:
			task_id = pending.pop()
			if task_id in keep:
				continue
			if task_id not in self.tasks:
				raise ValueError(f"Unknown scenario '{task_id}'")
			keep.add(task_id)
			pending.extend(self.tasks[task_id].dependencies)
		return ScenarioGraph(
			id=self.id,
			name=self.name,
			tasks={task_id: task for task_id, task in self.tasks.items() if task_id in keep},
		)


_HANDLERS = "landau_lab.harness"

SCENARIO_TASKS: Dict[str, ScenarioTask] = {
	"solve": ScenarioTask(id="solve", name="Forward solve", handler=f"{_HANDLERS}:run_solve"),
	"adjoint": ScenarioTask(id="adjoint", name="Adjoint certification", handler=f"{_HANDLERS}:run_adjoint"),
	"duality": ScenarioTask(
		id="duality",
		name="Duality identity",
		handler=f"{_HANDLERS}:run_duality",
		dependencies=["solve", "adjoint"],
	),
	"macro": ScenarioTask(id="macro", name="Macro-micro control", handler=f"{_HANDLERS}:run_macro", dependencies=["solve"]),
	"decay": ScenarioTask(id="decay", name="L² decay", handler=f"{_HANDLERS}:run_decay", dependencies=["solve"]),
	"flatten": ScenarioTask(id="flatten", name="Boundary flattening", handler=f"{_HANDLERS}:run_flatten"),
	"geometry": ScenarioTask(id="geometry", name="Geometry and coefficients", handler=f"{_HANDLERS}:run_geometry"),
}


def scenario_graph(selection: str = "all", graph_id: Optional[str] = None) -> ScenarioGraph:
	"""The scenario graph closed under dependencies for a requested scenario."""

	full = ScenarioGraph(id=graph_id or "landau-lab", name="Landau specular lab", tasks=dict(SCENARIO_TASKS))
	if selection == "all":
		return full
	return full.closure([selection])


def build_run_tasks(graph: ScenarioGraph, run_id: str) -> List[Dict[str, Any]]:
	"""Build per-run task payloads for enqueuing."""

	graph.validate()
	payloads: List[Dict[str, Any]] = []
	for task_id in graph.topological_sort():
		task = graph.tasks[task_id]
		payloads.append(
			{
				"task_run_id": f"{run_id}:{task_id}",
				"run_id": run_id,
				"task_id": task_id,
				"graph_id": graph.id,
				"handler": task.handler,
				"dependencies": list(task.dependencies),
				"downstream": graph.downstream(task_id),
				"metadata": dict(task.metadata),
			}
		)
	return payloads
