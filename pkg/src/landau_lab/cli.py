"""Command-line front end: ``run``, ``compare``, ``validate-config`` and ``list-scenarios``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import h5py
import numpy as np
from dotenv import load_dotenv

from .config import ConfigError, RunConfig, config_hash, load_config, parse_config
from .harness import run
from .persistence import ArtifactIOError
from .report import MismatchedSuites, compare_runs, load_report
from .scenarios import SCENARIO_TASKS
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog="landau-lab", description="Batch runs of the specular Landau approximation lab.")
	parser.add_argument("--log-level", default=None, help="Logging level (default: LANDAU_LAB_LOG_LEVEL or INFO)")
	verbs = parser.add_subparsers(dest="verb", required=True)

	run = verbs.add_parser("run", help="Execute the configured scenarios and write the report")
	run.add_argument("--config", required=True, help="YAML or JSON run configuration")
	run.add_argument("--output", default=None, help="Override output_dir")
	run.add_argument("--seed", type=int, default=None, help="Override the seed")
	run.add_argument("--scenario", default=None, choices=sorted(SCENARIO_TASKS) + ["all"], help="Override the scenario")

	compare = verbs.add_parser("compare", help="Tabulate property deltas between two run directories")
	compare.add_argument("first", help="Run directory (or report.json) a")
	compare.add_argument("second", help="Run directory (or report.json) b")

	validate = verbs.add_parser("validate-config", help="Check a configuration and print its hash")
	validate.add_argument("--config", required=True)

	verbs.add_parser("list-scenarios", help="List scenarios and their dependencies")
	return parser


def _with_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
	updates = {}
	if args.output is not None:
		updates["output_dir"] = args.output
	if args.seed is not None:
		updates["seed"] = args.seed
	if args.scenario is not None:
		updates["scenario"] = args.scenario
	if not updates:
		return config
	return parse_config({**config.model_dump(mode="json"), **updates})


def _report_path(path: str) -> Path:
	candidate = Path(path)
	return candidate / "report.json" if candidate.is_dir() else candidate


def _final_field(report_path: Path) -> Optional[np.ndarray]:
	checkpoint = report_path.parent / "solve_final.h5"
	if not checkpoint.exists():
		return None
	with h5py.File(checkpoint, "r") as handle:
		return handle["f"][()]


def _cmd_run(args: argparse.Namespace) -> int:
	config = _with_overrides(load_config(args.config), args)
	report = run(config)
	for row in report.summary_rows():
		status = "info" if row["passed"] is None else ("pass" if row["passed"] else "FAIL")
		print(f"{status:>4}  {row['scenario']:<9} {row['name']:<28} {row['measured']:.6g}")
	print(f"verdict: {report.verdict}")
	return EXIT_OK if report.passed else EXIT_FAILED


def _cmd_compare(args: argparse.Namespace) -> int:
	first_path, second_path = _report_path(args.first), _report_path(args.second)
	try:
		first, second = load_report(first_path), load_report(second_path)
	except OSError as exc:
		raise ArtifactIOError(f"Cannot read report: {exc}") from exc
	fields = None
	left, right = _final_field(first_path), _final_field(second_path)
	if left is not None and right is not None and left.shape == right.shape:
		fields = (left, right)
	diff = compare_runs(first, second, fields=fields)
	digests_a, digests_b = first.provenance.artifacts, second.provenance.artifacts
	for name in sorted(set(digests_a) & set(digests_b)):
		if name.endswith(".csv") and digests_a[name] != digests_b[name]:
			diff.append({"name": f"artifact:{name}", "a": 0.0, "b": 0.0, "delta": 0.0, "direction": "differs"})
	print(json.dumps(diff, indent=2))
	return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
	config = load_config(args.config)
	print(f"valid: {args.config} (config_hash {config_hash(config)})")
	return EXIT_OK


def _cmd_list(_: argparse.Namespace) -> int:
	for task_id, task in SCENARIO_TASKS.items():
		needs = ", ".join(task.dependencies) or "-"
		print(f"{task_id:<9} {task.name:<28} needs: {needs}")
	return EXIT_OK


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "validate-config": _cmd_validate, "list-scenarios": _cmd_list}


def main(argv: Optional[List[str]] = None) -> int:
	load_dotenv()
	args = build_parser().parse_args(argv)
	setup_logging(args.log_level)
	if args.log_level:
		logging.getLogger().setLevel(args.log_level.upper())
	try:
		return COMMANDS[args.verb](args)
	except ConfigError as exc:
		LOGGER.error("Invalid configuration: %s", exc)
		print(f"config error: {exc}", file=sys.stderr)
		return EXIT_CONFIG
	except ArtifactIOError as exc:
		LOGGER.error("Artifact I/O failed: %s", exc)
		print(f"io error: {exc}", file=sys.stderr)
		return EXIT_IO
	except MismatchedSuites as exc:
		print(f"cannot compare: {exc}", file=sys.stderr)
		return EXIT_FAILED


if __name__ == "__main__":  # pragma: no cover
	sys.exit(main())
