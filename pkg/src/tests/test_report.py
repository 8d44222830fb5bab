"""Tests for run reports and comparison."""

import math

import numpy as np
import pytest

from landau_lab.report import MismatchedSuites, Provenance, RunReport, compare_runs, load_report, make_record


def _report(**measured: float) -> RunReport:
	report = RunReport(provenance=Provenance(config_hash="h", code_version="0.1.0"))
	for name, value in measured.items():
		report.add(make_record(name, "solve", "test", value, threshold=1.0))
	return report


def test_make_record_senses() -> None:
	assert make_record("a", "s", "r", 0.5, threshold=1.0).passed
	assert not make_record("a", "s", "r", 0.5, threshold=1.0, sense="ge").passed
	assert not make_record("a", "s", "r", math.nan, threshold=1.0).passed

	info = make_record("a", "s", "r", 5.0)
	assert info.passed and not info.asserted


def test_duplicate_property_rejected() -> None:
	report = _report(sup=0.5)
	with pytest.raises(ValueError, match="already recorded"):
		report.add(make_record("sup", "solve", "test", 0.1, threshold=1.0))
	with pytest.raises(LookupError):
		report.get("missing")


def test_verdict_counts_failed_scenarios() -> None:
	report = _report(sup=0.5)
	assert report.verdict == "PASS"
	report.scenarios["macro"] = "skipped"
	assert report.failures == ["scenario:macro"]
	assert report.verdict == "FAIL"


def test_compare_identical_reports_is_empty(tmp_path) -> None:
	report = _report(sup=0.5, l1=0.25)
	path = tmp_path / "report.json"
	path.write_text(report.model_dump_json(), encoding="utf-8")

	assert compare_runs(report, load_report(path)) == []


def test_compare_directions_and_fields() -> None:
	first, second = _report(sup=0.5, l1=0.25), _report(sup=0.4, l1=0.3)
	rows = {row["name"]: row for row in compare_runs(first, second, fields=(np.zeros(3), np.full(3, 0.25)))}

	assert rows["sup"]["direction"] == "improved"
	assert rows["l1"]["direction"] == "worsened"
	assert rows["l1"]["delta"] == pytest.approx(0.05)
	assert rows["field_sup_difference"]["b"] == pytest.approx(0.25)


def test_compare_mismatched_suites() -> None:
	with pytest.raises(MismatchedSuites):
		compare_runs(_report(sup=0.5), _report(l1=0.5))
	with pytest.raises(MismatchedSuites, match="shapes"):
		compare_runs(_report(sup=0.5), _report(sup=0.5), fields=(np.zeros(2), np.zeros(3)))
