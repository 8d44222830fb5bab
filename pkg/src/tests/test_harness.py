"""Tests for the scenario harness and its run reports."""

import json
import math
from pathlib import Path
from typing import Any, Dict

import pytest

from landau_lab.config import parse_config
from landau_lab.harness import run
from landau_lab.persistence import InMemoryStore


def _small_config(scenario: str, **overrides: Any) -> Dict[str, Any]:
	payload: Dict[str, Any] = {
		"scenario": scenario,
		"grid": {"nx": [4, 4, 4], "nv": 8, "v_max": 4.0},
		"schedule": {"jacobian_anchors": 20},
		"quadrature": {"bump_order": 8, "self_check": False},
		"flatten": {"samples": 20},
	}
	payload.update(overrides)
	return payload


def test_flatten_scenario_records_interface_claims() -> None:
	store = InMemoryStore()
	report = run(parse_config(_small_config("flatten")), store=store)

	assert report.scenarios == {"flatten": "success"}
	for name in ("specular_commutation", "c_cross_entries", "a_continuity", "extension_flux"):
		assert report.get(name).passed, name
	assert not report.get("big_b_jump").asserted
	assert {"config.yaml", "flatten_interface.csv", "flatten_interface.svg", "report.json"} <= set(store.files)
	assert store.files["flatten_interface.csv"].startswith(f"# config_hash: {report.provenance.config_hash}")
	assert report.provenance.artifacts["flatten_interface.csv"]


def test_repeated_runs_write_identical_artifacts() -> None:
	config = parse_config(_small_config("flatten", seed=7))
	first, second = InMemoryStore(), InMemoryStore()
	report_a = run(config, store=first)
	report_b = run(config, store=second)

	assert first.files["flatten_interface.csv"] == second.files["flatten_interface.csv"]
	assert first.files["flatten_interface.svg"] == second.files["flatten_interface.svg"]
	assert report_a.provenance.artifacts == report_b.provenance.artifacts
	assert [item.measured for item in report_a.properties] == [item.measured for item in report_b.properties]


def test_geometry_scenario_on_the_slab() -> None:
	report = run(parse_config(_small_config("geometry")), store=InMemoryStore())

	assert report.scenarios == {"geometry": "success"}
	assert report.get("cutoff_defect").passed
	assert report.get("q_eps_exactness").passed
	assert report.get("gaussian_moment_oracle").passed
	assert report.get("jacobian_anchor").passed
	assert math.isfinite(report.get("eigenvalue_slope_min").measured)


def test_failing_scenario_fails_the_run() -> None:
	payload = _small_config("geometry", domain={"kind": "ball", "params": {"radius": 1.0, "delta0": 0.1}})
	report = run(parse_config(payload), store=InMemoryStore())

	assert report.scenarios == {"geometry": "failed"}
	assert report.verdict == "FAIL"
	assert "scenario:geometry" in report.failures


def test_run_writes_to_the_output_directory(tmp_path: Path) -> None:
	output = tmp_path / "desk"
	report = run(parse_config(_small_config("flatten", output_dir=str(output))))

	saved = json.loads((output / "report.json").read_text(encoding="utf-8"))
	assert saved["provenance"]["config_hash"] == report.provenance.config_hash
	assert (output / "config.yaml").exists()
	assert (output / "flatten_interface.csv").exists()


def _solve_schedule(**overrides: Any) -> Dict[str, Any]:
	schedule: Dict[str, Any] = {"T": 0.02, "dt": 0.01, "n": 2, "lipschitz_pairs": 2}
	schedule.update(overrides)
	return schedule


def test_solve_asserts_l1_contraction_in_cholesky_mode() -> None:
	store = InMemoryStore()
	report = run(parse_config(_small_config("solve", schedule=_solve_schedule(diffusion="cholesky"))), store=store)

	assert report.scenarios == {"solve": "success"}
	record = report.get("l1_contraction")
	assert record.asserted
	assert record.threshold == pytest.approx(1.0 + 1e-6)
	assert "laplacian" in record.reference
	assert not report.get("l1_ratio_configured_mode").asserted
	assert report.get("diffusion_mode_difference").measured >= 0.0
	modes = json.loads(store.files["diffusion_modes.json"])
	assert set(modes) == {"cholesky", "stencil", "differences"}
	assert report.provenance.artifacts["diffusion_modes.json"]


def test_solve_series_is_identical_across_thread_counts(monkeypatch) -> None:
	config = parse_config(_small_config("solve", schedule=_solve_schedule()))
	single = InMemoryStore()
	run(config, store=single)
	monkeypatch.setenv("LANDAU_LAB_THREADS", "2")
	threaded = InMemoryStore()
	run(config, store=threaded)

	assert single.files["solve_series.csv"] == threaded.files["solve_series.csv"]
	assert single.files["reflection.csv"] == threaded.files["reflection.csv"]


def test_duality_refinement_ratio_is_asserted() -> None:
	report = run(parse_config(_small_config("duality", schedule=_solve_schedule())), store=InMemoryStore())

	assert report.scenarios == {"solve": "success", "adjoint": "success", "duality": "success"}
	record = report.get("duality_refinement_ratio")
	assert record.asserted
	assert record.threshold == 2.0
	assert record.sense == "ge"
	assert math.isfinite(record.measured)
	assert report.get("duality_residual_coarse").measured >= 0.0
	assert report.get("duality_residual_fine").measured == report.get("duality_residual").measured


def test_macro_control_is_held_to_a_fixed_constant() -> None:
	report = run(parse_config(_small_config("macro", schedule=_solve_schedule())), store=InMemoryStore())

	assert report.scenarios == {"solve": "success", "macro": "success"}
	for name in ("macro_inequality_1", "macro_inequality_2", "macro_inequality_refined", "macro_constant_stability", "specular_cancellation"):
		assert report.get(name).asserted, name
	assert report.get("macro_constant_stability").threshold == 2.0
	assert report.get("macro_constant_stability").measured >= 1.0
	cancellation = report.get("specular_cancellation")
	assert cancellation.threshold == 1e-8
	assert cancellation.passed
	assert not report.get("macro_constant_0").asserted


def test_refinement_checks_can_be_switched_off() -> None:
	payload = _small_config("duality", schedule=_solve_schedule(refinement_checks=False))
	report = run(parse_config(payload), store=InMemoryStore())

	assert report.get("duality_residual").asserted
	with pytest.raises(LookupError, match="duality_refinement_ratio"):
		report.get("duality_refinement_ratio")
