"""Artifact stores: scenario queue, task status tracking and run outputs."""

from __future__ import annotations

import io
import json
import threading
from pathlib import Path
from queue import Empty, Queue
from typing import Any, Dict, List, Mapping, Optional, Protocol, Sequence

import h5py
import numpy as np

from .utils import canonical_json


CSV_FORMAT = "%.17g"


class ArtifactIOError(OSError):
	"""Raised when an artifact cannot be written to the output directory."""


class QueueInterface(Protocol):
	"""Minimal queue contract for scheduler/runner collaboration."""

	def push_task_queue(self, item: dict) -> None:  # pragma: no cover - protocol
		...

	def pop_task_queue(self, timeout: float = 0) -> Optional[dict]:  # pragma: no cover - protocol
		...


class ArtifactStore(QueueInterface, Protocol):
	"""Full store contract used by the scheduler, the runner and the handlers."""

	def save_graph(self, graph_id: str, graph_json: str) -> None:
		...

	def load_graph(self, graph_id: str) -> Optional[str]:
		...

	def save_task_status(self, task_run_id: str, status: str, meta: dict) -> None:
		...

	def get_task_status(self, task_run_id: str) -> dict:
		...

	def put_artifact(self, key: str, value: Any) -> None:
		...

	def get_artifact(self, key: str) -> Any:
		...

	def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Mapping[str, float]], config_hash: str) -> str:
		...

	def write_text(self, name: str, text: str) -> str:
		...

	def write_checkpoint(self, name: str, arrays: Mapping[str, np.ndarray], attrs: Mapping[str, Any]) -> str:
		...


def render_csv(columns: Sequence[str], rows: Sequence[Mapping[str, float]], config_hash: str) -> str:
	"""Provenance comment, one header row, then full-precision rows in column order."""

	table = np.array([[float(row.get(column, np.nan)) for column in columns] for row in rows], dtype=float)
	if table.size == 0:
		table = table.reshape(0, len(columns))
	buffer = io.StringIO()
	header = f"# config_hash: {config_hash}\n" + ",".join(columns)
	np.savetxt(buffer, table, fmt=CSV_FORMAT, delimiter=",", header=header, comments="")
	return buffer.getvalue()


class InMemoryStore(ArtifactStore):
	"""Thread-safe in-memory store; written artifacts stay in ``files``."""

	def __init__(self) -> None:
		self._queue: Queue[dict] = Queue()
		self._graphs: Dict[str, str] = {}
		self._statuses: Dict[str, dict] = {}
		self._artifacts: Dict[str, Any] = {}
		self.files: Dict[str, Any] = {}
		self._lock = threading.Lock()

	def save_graph(self, graph_id: str, graph_json: str) -> None:
		with self._lock:
			self._graphs[graph_id] = graph_json

	def load_graph(self, graph_id: str) -> Optional[str]:
		with self._lock:
			return self._graphs.get(graph_id)

	def push_task_queue(self, item: dict) -> None:
		self._queue.put_nowait(item)

	def pop_task_queue(self, timeout: float = 0) -> Optional[dict]:
		try:
			if timeout:
				return self._queue.get(timeout=timeout)
			return self._queue.get_nowait()
		except Empty:
			return None

	def save_task_status(self, task_run_id: str, status: str, meta: dict) -> None:
		with self._lock:
			self._statuses[task_run_id] = {"status": status, **meta}

	def get_task_status(self, task_run_id: str) -> dict:
		with self._lock:
			return self._statuses.get(task_run_id, {})

	def put_artifact(self, key: str, value: Any) -> None:
		with self._lock:
			self._artifacts[key] = value

	def get_artifact(self, key: str) -> Any:
		with self._lock:
			try:
				return self._artifacts[key]
			except KeyError as exc:
				raise LookupError(f"No artifact '{key}' has been produced") from exc

	def written(self) -> List[str]:
		with self._lock:
			return sorted(self.files)

	# Outputs -------------------------------------------------------------
	def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Mapping[str, float]], config_hash: str) -> str:
		return self.write_text(name, render_csv(columns, rows, config_hash))

	def write_text(self, name: str, text: str) -> str:
		with self._lock:
			self.files[name] = text
		return name

	def write_checkpoint(self, name: str, arrays: Mapping[str, np.ndarray], attrs: Mapping[str, Any]) -> str:
		with self._lock:
			self.files[name] = {"arrays": {key: np.array(value) for key, value in arrays.items()}, "attrs": dict(attrs)}
		return name


class DirectoryStore(InMemoryStore):
	"""In-memory queue and artifacts; outputs land as files under ``root``."""

	def __init__(self, root: str | Path) -> None:
		super().__init__()
		self.root = Path(root)
		try:
			self.root.mkdir(parents=True, exist_ok=True)
		except OSError as exc:
			raise ArtifactIOError(f"Cannot create output directory {self.root}: {exc}") from exc

	def _path(self, name: str) -> Path:
		path = self.root / name
		try:
			path.parent.mkdir(parents=True, exist_ok=True)
		except OSError as exc:
			raise ArtifactIOError(f"Cannot create {path.parent}: {exc}") from exc
		return path

	def write_text(self, name: str, text: str) -> str:
		super().write_text(name, text)
		path = self._path(name)
		try:
			# newline="" keeps the bytes identical across platforms
			with open(path, "w", encoding="utf-8", newline="") as handle:
				handle.write(text)
		except OSError as exc:
			raise ArtifactIOError(f"Cannot write {path}: {exc}") from exc
		return str(path)

	def write_checkpoint(self, name: str, arrays: Mapping[str, np.ndarray], attrs: Mapping[str, Any]) -> str:
		super().write_checkpoint(name, arrays, attrs)
		path = self._path(name)
		try:
			with h5py.File(path, "w") as handle:
				for key, value in attrs.items():
					handle.attrs[key] = value if isinstance(value, (int, float, str)) else canonical_json(value)
				for key, value in arrays.items():
					handle.create_dataset(key, data=np.asarray(value), compression="gzip")
		except OSError as exc:
			raise ArtifactIOError(f"Cannot write checkpoint {path}: {exc}") from exc
		return str(path)


def write_json(store: ArtifactStore, name: str, payload: Any) -> str:
	return store.write_text(name, json.dumps(json.loads(canonical_json(payload)), indent=2, sort_keys=True) + "\n")
