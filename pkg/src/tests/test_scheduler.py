"""Tests for the scheduler."""

from landau_lab.persistence import InMemoryStore
from landau_lab.scenarios import ScenarioGraph, ScenarioTask
from landau_lab.scheduler import Scheduler


def _build_graph() -> ScenarioGraph:
	return ScenarioGraph(
		id="demo",
		name="Demo",
		tasks={
			"task_a": ScenarioTask(id="task_a", name="A", handler="demo:a"),
			"task_b": ScenarioTask(id="task_b", name="B", handler="demo:b", dependencies=["task_a"]),
		},
	)


def test_schedule_graph_enqueues_roots() -> None:
	store = InMemoryStore()
	scheduler = Scheduler(store)
	roots = scheduler.schedule_graph(_build_graph(), run_id="run-1")

	assert roots == ["task_a"]
	first = store.pop_task_queue(timeout=0)
	assert first is not None
	assert first["task_id"] == "task_a"
	assert set(first["graph_blueprint"]) == {"task_a", "task_b"}
	assert store.pop_task_queue(timeout=0) is None


def test_schedule_graph_all_independent_tasks_enqueued() -> None:
	graph = ScenarioGraph(
		id="demo",
		name="Demo",
		tasks={
			"task_a": ScenarioTask(id="task_a", name="A", handler="demo:a"),
			"task_b": ScenarioTask(id="task_b", name="B", handler="demo:b"),
		},
	)
	store = InMemoryStore()
	Scheduler(store).schedule_graph(graph, run_id="run-2")

	tasks = {
		store.pop_task_queue(timeout=0)["task_id"],
		store.pop_task_queue(timeout=0)["task_id"],
	}
	assert tasks == {"task_a", "task_b"}


def test_schedule_graph_records_run_and_queued_status() -> None:
	store = InMemoryStore()
	Scheduler(store).schedule_graph(_build_graph(), run_id="run-3")

	run_status = store.get_task_status("run:run-3")
	assert run_status["status"] == "scheduled"
	assert run_status["task_ids"] == ["task_a", "task_b"]
	assert store.get_task_status("run-3:task_a")["status"] == "queued"
	assert store.get_task_status("run-3:task_b") == {}
	assert store.load_graph("demo") is not None
