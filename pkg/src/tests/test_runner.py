"""Tests for the scenario runner."""

from typing import Any, Dict, List

from landau_lab.executor import execute_scenario
from landau_lab.persistence import InMemoryStore
from landau_lab.runner import Runner
from landau_lab.scenarios import ScenarioGraph, ScenarioTask
from landau_lab.scheduler import Scheduler


def _diamond() -> ScenarioGraph:
	return ScenarioGraph(
		id="diamond",
		name="Diamond",
		tasks={
			"root": ScenarioTask(id="root", name="Root", handler="demo:root"),
			"left": ScenarioTask(id="left", name="Left", handler="demo:left", dependencies=["root"]),
			"right": ScenarioTask(id="right", name="Right", handler="demo:right", dependencies=["root"]),
			"join": ScenarioTask(id="join", name="Join", handler="demo:join", dependencies=["left", "right"]),
		},
	)


def _fake_executor(failing: set) -> Any:
	calls: List[str] = []

	def executor(payload: Dict[str, Any], context: Any) -> Dict[str, Any]:
		calls.append(payload["task_id"])
		status = "failed" if payload["task_id"] in failing else "success"
		return {"status": status, "output": None, "stderr": "", "duration": "0.000s", "seconds": 0.0}

	executor.calls = calls  # type: ignore[attr-defined]
	return executor


def test_runner_executes_in_dependency_order() -> None:
	store = InMemoryStore()
	Scheduler(store).schedule_graph(_diamond(), run_id="r1")
	executed = Runner(store, context=None, executor=_fake_executor(set())).run()

	assert executed[0] == "root"
	assert executed[-1] == "join"
	assert sorted(executed) == ["join", "left", "right", "root"]
	assert store.get_task_status("r1:join")["status"] == "success"


def test_failed_scenario_skips_downstream() -> None:
	store = InMemoryStore()
	Scheduler(store).schedule_graph(_diamond(), run_id="r2")
	executor = _fake_executor({"left"})
	executed = Runner(store, context=None, executor=executor).run()

	assert "join" not in executed
	assert store.get_task_status("r2:left")["status"] == "failed"
	assert store.get_task_status("r2:join")["status"] == "skipped"
	assert store.get_task_status("r2:right")["status"] == "success"


def test_join_waits_for_every_dependency() -> None:
	store = InMemoryStore()
	Scheduler(store).schedule_graph(_diamond(), run_id="r3")
	executor = _fake_executor(set())
	Runner(store, context=None, executor=executor).run()

	assert executor.calls.count("join") == 1


def _double(context: Dict[str, int]) -> int:
	context["value"] *= 2
	return context["value"]


def _explode(context: Any) -> None:
	raise RuntimeError("boom")


def test_execute_scenario_runs_handler_in_process() -> None:
	context = {"value": 21}
	result = execute_scenario({"task_id": "t", "handler": f"{__name__}:_double"}, context)

	assert result["status"] == "success"
	assert result["output"] == 42
	assert context["value"] == 42
	assert result["duration"].endswith("s")


def test_execute_scenario_captures_traceback() -> None:
	result = execute_scenario({"task_id": "t", "handler": f"{__name__}:_explode"}, None)

	assert result["status"] == "failed"
	assert "RuntimeError: boom" in result["stderr"]
