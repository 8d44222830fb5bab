"""Run reports: property records, provenance, verdicts and run comparison."""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()


class MismatchedSuites(ValueError):
	"""Raised when two reports do not carry the same property set."""


class PropertyRecord(BaseModel):
	"""One measured property with its threshold and pass flag.

	``sense`` is ``le`` when the measured value must not exceed the threshold
	and ``ge`` when it must not fall below it. Informational records carry
	``asserted=False`` and never fail a run.
	"""

	name: str
	scenario: str
	reference: str
	measured: float
	threshold: Optional[float] = None
	sense: Literal["le", "ge"] = "le"
	asserted: bool = True
	passed: bool = True

	@field_validator("measured")
	@classmethod
	def _real(cls, value: float) -> float:
		return float(value)


def make_record(
	name: str,
	scenario: str,
	reference: str,
	measured: float,
	threshold: Optional[float] = None,
	sense: str = "le",
	asserted: bool = True,
) -> PropertyRecord:
	measured = float(measured)
	if threshold is None or not asserted:
		passed = True
	elif math.isnan(measured):
		passed = False
	elif sense == "le":
		passed = measured <= threshold
	else:
		passed = measured >= threshold
	return PropertyRecord(
		name=name,
		scenario=scenario,
		reference=reference,
		measured=measured,
		threshold=threshold,
		sense=sense,
		asserted=asserted and threshold is not None,
		passed=passed,
	)


class Provenance(BaseModel):
	config_hash: str
	code_version: str
	wall_time: float = 0.0
	seed: int = 0
	scenario: str = "all"
	artifacts: Dict[str, str] = Field(default_factory=dict)


class RunReport(BaseModel):
	"""Self-describing record of a run; each property appears exactly once."""

	provenance: Provenance
	properties: List[PropertyRecord] = Field(default_factory=list)
	scenarios: Dict[str, str] = Field(default_factory=dict)

	def add(self, record: PropertyRecord) -> None:
		if any(item.name == record.name for item in self.properties):
			raise ValueError(f"Property '{record.name}' is already recorded")
		self.properties.append(record)
		if record.asserted and not record.passed:
			LOGGER.warning(
				"Property %s failed: measured %.6g against threshold %.6g", record.name, record.measured, record.threshold
			)

	def get(self, name: str) -> PropertyRecord:
		for item in self.properties:
			if item.name == name:
				return item
		raise LookupError(f"No property '{name}' in the report")

	@property
	def failures(self) -> List[str]:
		failed = [item.name for item in self.properties if item.asserted and not item.passed]
		failed += [f"scenario:{name}" for name, status in self.scenarios.items() if status != "success"]
		return failed

	@property
	def passed(self) -> bool:
		return not self.failures

	@property
	def verdict(self) -> str:
		return "PASS" if self.passed else "FAIL"

	def summary_rows(self) -> List[Dict[str, Any]]:
		return [
			{
				"name": item.name,
				"scenario": item.scenario,
				"measured": item.measured,
				"threshold": item.threshold,
				"passed": item.passed if item.asserted else None,
			}
			for item in self.properties
		]


def load_report(path: str | Path) -> RunReport:
	return RunReport.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


def compare_runs(
	report_a: RunReport,
	report_b: RunReport,
	fields: Optional[tuple] = None,
) -> List[Dict[str, Any]]:
	"""Measured-value deltas (b − a) of the properties that differ.

	``direction`` is ``improved`` when b is closer to passing (lower for ``le``
	records, higher for ``ge`` records). With ``fields`` the sup-norm
	difference of two final fields is appended, as for diffusion-mode
	cross-validation.
	"""

	names_a = {item.name for item in report_a.properties}
	names_b = {item.name for item in report_b.properties}
	if names_a != names_b:
		raise MismatchedSuites(f"Property sets differ: only in a {sorted(names_a - names_b)}, only in b {sorted(names_b - names_a)}")

	diff: List[Dict[str, Any]] = []
	for item in report_a.properties:
		other = report_b.get(item.name)
		if item.measured == other.measured or (math.isnan(item.measured) and math.isnan(other.measured)):
			continue
		delta = other.measured - item.measured
		better = delta < 0 if item.sense == "le" else delta > 0
		diff.append(
			{
				"name": item.name,
				"a": item.measured,
				"b": other.measured,
				"delta": delta,
				"direction": "improved" if better else "worsened",
			}
		)
	if fields is not None:
		first, second = (np.asarray(item, dtype=float) for item in fields)
		if first.shape != second.shape:
			raise MismatchedSuites(f"Field shapes differ: {first.shape} vs {second.shape}")
		gap = float(np.max(np.abs(first - second))) if first.size else 0.0
		if gap:
			diff.append({"name": "field_sup_difference", "a": 0.0, "b": gap, "delta": gap, "direction": "reported"})
	return diff
