"""Utility helpers shared across the Landau lab."""

from __future__ import annotations

import hashlib
import importlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Sequence, TypeVar

import numpy as np


T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "LANDAU_LAB_THREADS"
LOG_LEVEL_ENV = "LANDAU_LAB_LOG_LEVEL"


def human_readable_duration(seconds: float) -> str:
	"""Wall time as ``1h 2m 5.000s``; leading zero units are omitted."""

	if seconds < 0:
		raise ValueError("Duration cannot be negative")
	whole_minutes, remainder = divmod(float(seconds), 60.0)
	hours, minutes = divmod(int(whole_minutes), 60)
	parts = [f"{hours}h"] if hours else []
	if hours or minutes:
		parts.append(f"{minutes}m")
	parts.append(f"{round(remainder, 3):.3f}s")
	return " ".join(parts)


def import_handler(path: str) -> Callable[..., Any]:
	"""Resolve a scenario handler from ``package.module:function`` (or a dotted path)."""

	if not path:
		raise ValueError("handler path must be provided")
	module_name, _, attr = path.rpartition(":" if ":" in path else ".")
	if not module_name or not attr:
		raise ValueError(f"Invalid handler path: {path}")
	try:
		handler = getattr(importlib.import_module(module_name), attr)
	except ModuleNotFoundError as exc:
		raise ImportError(f"Handler module '{module_name}' not found") from exc
	except AttributeError as exc:
		raise ImportError(f"Module '{module_name}' has no handler '{attr}'") from exc
	if not callable(handler):
		raise TypeError(f"Handler '{path}' is not callable")
	return handler


def setup_logging(level: str | None = None) -> None:
	"""Configure application-wide logging exactly once."""

	if getattr(setup_logging, "_configured", False):  # type: ignore[attr-defined]
		return

	level = level or os.getenv(LOG_LEVEL_ENV, "INFO")
	logging.basicConfig(
		level=getattr(logging, level.upper(), logging.INFO),
		format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
	)
	setattr(setup_logging, "_configured", True)  # type: ignore[attr-defined]


def thread_count() -> int:
	"""Worker threads for chunked per-node work, from ``LANDAU_LAB_THREADS``."""

	raw = os.getenv(THREADS_ENV, "1")
	try:
		count = int(raw)
	except ValueError as exc:
		raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
	if count < 1:
		raise ValueError(f"{THREADS_ENV} must be positive")
	return count


def chunk_slices(total: int, chunk: int) -> List[slice]:
	"""Split ``range(total)`` into contiguous slices of at most ``chunk`` items."""

	if chunk <= 0:
		raise ValueError("chunk must be positive")
	return [slice(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def ordered_map(func: Callable[[T], R], items: Sequence[T] | Iterable[T], threads: int | None = None) -> List[R]:
	"""Map ``func`` over ``items`` on a thread pool, returning results in input order.

	Results are collected positionally, so reductions performed afterwards see
	the same operand order regardless of the thread count.
	"""

	items = list(items)
	workers = threads if threads is not None else thread_count()
	if workers <= 1 or len(items) <= 1:
		return [func(item) for item in items]
	with ThreadPoolExecutor(max_workers=workers) as pool:
		return list(pool.map(func, items))


def canonical_json(payload: Any) -> str:
	"""Serialize ``payload`` with sorted keys and full float precision."""

	return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def stable_hash(payload: Any) -> str:
	"""SHA-256 hex digest of the canonical JSON form of ``payload``."""

	return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def _json_default(value: Any) -> Any:
	if isinstance(value, np.generic):
		return value.item()
	if isinstance(value, np.ndarray):
		return value.tolist()
	raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
