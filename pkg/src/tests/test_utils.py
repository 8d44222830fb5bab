"""Tests for utility helpers."""

import numpy as np
import pytest

from landau_lab.utils import (
	THREADS_ENV,
	canonical_json,
	chunk_slices,
	human_readable_duration,
	ordered_map,
	import_handler,
	stable_hash,
	thread_count,
)


def test_human_readable_duration() -> None:
	assert human_readable_duration(1.5) == "1.500s"
	assert human_readable_duration(3725.0) == "1h 2m 5.000s"
	with pytest.raises(ValueError):
		human_readable_duration(-1)


def test_import_handler_paths() -> None:
	assert import_handler("landau_lab.utils:stable_hash") is stable_hash
	assert import_handler("landau_lab.utils.chunk_slices") is chunk_slices
	with pytest.raises(ImportError):
		import_handler("landau_lab.utils:missing")
	with pytest.raises(TypeError):
		import_handler("landau_lab.utils:THREADS_ENV")


def test_thread_count_env(monkeypatch) -> None:
	monkeypatch.setenv(THREADS_ENV, "3")
	assert thread_count() == 3
	monkeypatch.setenv(THREADS_ENV, "zero")
	with pytest.raises(ValueError):
		thread_count()


def test_ordered_map_preserves_order() -> None:
	items = list(range(17))
	assert ordered_map(lambda x: x * x, items, threads=4) == [x * x for x in items]
	assert chunk_slices(5, 2) == [slice(0, 2), slice(2, 4), slice(4, 5)]


def test_stable_hash_handles_numpy() -> None:
	assert canonical_json({"b": np.float64(0.5), "a": np.arange(2)}) == '{"a":[0,1],"b":0.5}'
	assert stable_hash({"x": 1, "y": 2}) == stable_hash({"y": 2, "x": 1})
