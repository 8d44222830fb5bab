"""Tests for the scenario graph models."""

import pytest

from landau_lab.scenarios import SCENARIO_TASKS, CycleError, ScenarioGraph, ScenarioTask, build_run_tasks, scenario_graph


def _simple_graph() -> ScenarioGraph:
	return ScenarioGraph(
		id="demo",
		name="Demo",
		tasks={
			"task_a": ScenarioTask(id="task_a", name="A", handler="demo:a"),
			"task_b": ScenarioTask(id="task_b", name="B", handler="demo:b", dependencies=["task_a"]),
			"task_c": ScenarioTask(id="task_c", name="C", handler="demo:c", dependencies=["task_b"]),
		},
	)


def test_topological_sort_simple() -> None:
	graph = _simple_graph()
	assert graph.topological_sort() == ["task_a", "task_b", "task_c"]


def test_cycle_detection() -> None:
	graph = ScenarioGraph(
		id="cycle",
		name="Cycle",
		tasks={
			"task_a": ScenarioTask(id="task_a", name="A", handler="demo:a", dependencies=["task_c"]),
			"task_b": ScenarioTask(id="task_b", name="B", handler="demo:b", dependencies=["task_a"]),
			"task_c": ScenarioTask(id="task_c", name="C", handler="demo:c", dependencies=["task_b"]),
		},
	)
	with pytest.raises(CycleError):
		graph.validate()


def test_missing_dependency() -> None:
	graph = ScenarioGraph(
		id="missing",
		name="Missing",
		tasks={
			"task_a": ScenarioTask(id="task_a", name="A", handler="demo:a", dependencies=["task_x"]),
		},
	)
	with pytest.raises(ValueError, match="undefined dependencies"):
		graph.validate()


def test_task_rejects_self_dependency_and_bare_handler() -> None:
	with pytest.raises(ValueError, match="itself"):
		ScenarioTask(id="a", name="A", handler="demo:a", dependencies=["a"])
	with pytest.raises(ValueError, match="module:function"):
		ScenarioTask(id="a", name="A", handler="demo_a")


def test_closure_pulls_in_prerequisites() -> None:
	graph = scenario_graph("duality")
	assert set(graph.tasks) == {"solve", "adjoint", "duality"}
	assert graph.topological_sort()[-1] == "duality"

	with pytest.raises(ValueError, match="Unknown scenario"):
		scenario_graph().closure(["nope"])


def test_full_graph_orders_solve_before_its_consumers() -> None:
	order = scenario_graph().topological_sort()
	assert set(order) == set(SCENARIO_TASKS)
	for consumer in ("macro", "decay", "duality"):
		assert order.index("solve") < order.index(consumer)


def test_build_run_tasks_payloads() -> None:
	tasks = build_run_tasks(_simple_graph(), run_id="run-7")
	assert [task["task_id"] for task in tasks] == ["task_a", "task_b", "task_c"]
	first = tasks[0]
	assert first["task_run_id"] == "run-7:task_a"
	assert first["downstream"] == ["task_b"]
	assert first["handler"] == "demo:a"
	assert tasks[2]["dependencies"] == ["task_b"]
