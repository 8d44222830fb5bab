"""Run configuration models, YAML/JSON loading and the configuration hash."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .solver import DIFFUSION_MODES, SolverSchedule
from .utils import setup_logging, stable_hash


LOGGER = logging.getLogger(__name__)
setup_logging()

ScenarioName = Literal["solve", "adjoint", "duality", "macro", "decay", "flatten", "geometry", "all"]


class ConfigError(ValueError):
	"""Raised for invalid run configurations; ``path`` is the dotted field path."""

	def __init__(self, message: str, path: str = "") -> None:
		super().__init__(f"{path}: {message}" if path else message)
		self.path = path


class _Block(BaseModel):
	model_config = ConfigDict(extra="forbid")


class DomainBlock(_Block):
	kind: Literal["slab", "half_space", "ball", "ellipsoid", "graph_patch"] = "slab"
	params: Dict[str, Any] = Field(default_factory=lambda: {"half_width": 1.0, "period": 2.0, "delta0": 0.5})
	patches: List[Dict[str, Any]] = Field(default_factory=list)

	@model_validator(mode="after")
	def _graph_patch_table(self) -> "DomainBlock":
		if self.kind == "graph_patch" and not self.patches:
			raise ValueError("graph_patch domains need one polynomial patch table")
		return self


class GridBlock(_Block):
	nx: Tuple[int, int, int] = (16, 16, 16)
	nv: int = 24
	v_max: float = 8.0

	@field_validator("nx")
	@classmethod
	def _positive_cells(cls, value: Tuple[int, int, int]) -> Tuple[int, int, int]:
		if any(n < 1 for n in value) or value[2] < 2:
			raise ValueError("nx needs positive counts and at least two cells across the slab")
		return value

	@field_validator("nv")
	@classmethod
	def _velocity_cells(cls, value: int) -> int:
		if value < 4 or value % 2:
			raise ValueError("nv must be an even number of at least 4 cells")
		return value

	@field_validator("v_max")
	@classmethod
	def _velocity_box(cls, value: float) -> float:
		if value <= 0:
			raise ValueError("v_max must be positive")
		return value

	@property
	def h_v(self) -> float:
		return 2.0 * self.v_max / self.nv


class ScheduleBlock(_Block):
	epsilon: float = 0.2
	a: float = 0.1
	n: int = 6
	epsilon_list: List[float] = Field(default_factory=lambda: [0.3, 0.2, 0.15, 0.1])
	a_list: List[float] = Field(default_factory=lambda: [0.3, 0.1, 0.03])
	n_max: int = 12
	T: float = 0.5
	dt: float = 0.01
	fixed_point_tol: float = 1e-9
	max_picard: int = 200
	duhamel_panels: int = 10
	mismatch_tol: float = 1e-10
	output_every: int = 1
	diffusion: str = "cholesky"
	window_safety: float = 0.95
	compatibility_delta: Optional[float] = None
	norm_theta: float = 0.0
	run_limit_schedule: bool = False
	refinement_checks: bool = True
	jacobian_anchors: int = 1000
	lipschitz_pairs: int = 20

	@field_validator("epsilon")
	@classmethod
	def _epsilon_range(cls, value: float) -> float:
		if not 0.0 < value < 0.5:
			raise ValueError("epsilon must lie in (0, 1/2)")
		return value

	@field_validator("epsilon_list")
	@classmethod
	def _epsilon_list_range(cls, value: List[float]) -> List[float]:
		if not value or any(not 0.0 < item < 0.5 for item in value):
			raise ValueError("every epsilon must lie in (0, 1/2)")
		if value != sorted(value, reverse=True):
			raise ValueError("epsilon_list must be decreasing")
		return value

	@field_validator("a")
	@classmethod
	def _a_range(cls, value: float) -> float:
		if not 0.0 < value < 1.0:
			raise ValueError("a must lie in (0, 1)")
		return value

	@field_validator("a_list")
	@classmethod
	def _a_list_range(cls, value: List[float]) -> List[float]:
		if not value or any(not 0.0 < item < 1.0 for item in value):
			raise ValueError("every a must lie in (0, 1)")
		if value != sorted(value, reverse=True):
			raise ValueError("a_list must be decreasing")
		return value

	@field_validator("n", "n_max", "max_picard", "duhamel_panels", "output_every", "jacobian_anchors", "lipschitz_pairs")
	@classmethod
	def _positive_count(cls, value: int) -> int:
		if value < 1:
			raise ValueError("counts must be at least 1")
		return value

	@field_validator("T", "dt", "fixed_point_tol", "mismatch_tol")
	@classmethod
	def _positive(cls, value: float) -> float:
		if value <= 0:
			raise ValueError("must be positive")
		return value

	@field_validator("diffusion")
	@classmethod
	def _known_mode(cls, value: str) -> str:
		if value not in DIFFUSION_MODES:
			raise ValueError(f"diffusion must be one of {', '.join(DIFFUSION_MODES)}")
		return value

	@field_validator("window_safety")
	@classmethod
	def _safety(cls, value: float) -> float:
		if not 0.0 < value < 1.0:
			raise ValueError("window_safety must lie in (0, 1)")
		return value

	@field_validator("norm_theta")
	@classmethod
	def _theta(cls, value: float) -> float:
		if value < 0:
			raise ValueError("norm_theta must be non-negative")
		return value

	def to_schedule(self, diffusion: Optional[str] = None, n_max: Optional[int] = None) -> SolverSchedule:
		return SolverSchedule(
			epsilon_list=tuple(self.epsilon_list),
			a_list=tuple(self.a_list),
			n_max=n_max or self.n,
			T=self.T,
			dt=self.dt,
			fixed_point_tol=self.fixed_point_tol,
			max_picard=self.max_picard,
			duhamel_panels=self.duhamel_panels,
			mismatch_tol=self.mismatch_tol,
			output_every=self.output_every,
			diffusion=diffusion or self.diffusion,
			window_safety=self.window_safety,
			compatibility_delta=self.compatibility_delta,
			norm_theta=self.norm_theta,
		)


class QuadratureBlock(_Block):
	bump_order: int = 16
	backend: Literal["grid", "spherical"] = "grid"
	self_check: bool = True
	radial_order: int = 16
	angular_order: int = 24
	azimuth_order: int = 32

	@field_validator("bump_order", "radial_order", "angular_order", "azimuth_order")
	@classmethod
	def _order(cls, value: int) -> int:
		if value < 2:
			raise ValueError("quadrature orders must be at least 2")
		return value


class BackgroundBlock(_Block):
	amplitude: float = 0.0
	wavenumber: int = 1


class InitialDataBlock(_Block):
	kind: Literal["mode", "random", "zero"] = "mode"
	amplitude: float = 0.5
	wavenumber: int = 1

	@field_validator("amplitude")
	@classmethod
	def _admissible(cls, value: float) -> float:
		if abs(value) > 1.0:
			raise ValueError("|amplitude| must not exceed 1 so that μ + √μ f₀ ≥ 0")
		return value


class AdjointBlock(_Block):
	"""Compactly supported terminal datum ψ_T away from the wall/grazing set."""

	centre_x: Tuple[float, float, float] = (1.0, 1.0, 0.0)
	radius_x: float = 0.5
	centre_v: Tuple[float, float, float] = (0.0, 0.0, 0.0)
	radius_v: float = 2.0
	amplitude: float = 1.0

	@field_validator("radius_x", "radius_v", "amplitude")
	@classmethod
	def _positive(cls, value: float) -> float:
		if value <= 0:
			raise ValueError("must be positive")
		return value


class FlattenBlock(_Block):
	samples: int = 10_000
	tilt: float = 0.5
	box: float = 0.5
	refinement_steps: List[float] = Field(default_factory=lambda: [1e-2, 5e-3, 2.5e-3])

	@field_validator("samples")
	@classmethod
	def _samples(cls, value: int) -> int:
		if value < 1:
			raise ValueError("samples must be positive")
		return value


class RunConfig(_Block):
	domain: DomainBlock = Field(default_factory=DomainBlock)
	grid: GridBlock = Field(default_factory=GridBlock)
	schedule: ScheduleBlock = Field(default_factory=ScheduleBlock)
	quadrature: QuadratureBlock = Field(default_factory=QuadratureBlock)
	background: BackgroundBlock = Field(default_factory=BackgroundBlock)
	initial: InitialDataBlock = Field(default_factory=InitialDataBlock)
	adjoint: AdjointBlock = Field(default_factory=AdjointBlock)
	flatten: FlattenBlock = Field(default_factory=FlattenBlock)
	scenario: ScenarioName = "all"
	seed: int = 0
	output_dir: str = "runs/desk"

	@model_validator(mode="after")
	def _solver_domain(self) -> "RunConfig":
		if self.scenario in {"all", "solve", "adjoint", "duality", "macro", "decay"} and self.domain.kind != "slab":
			raise ValueError(f"scenario '{self.scenario}' runs on the slab domain; run flatten or geometry for other domains")
		return self


def _dotted_path(error: ValidationError) -> Tuple[str, str]:
	first = error.errors()[0]
	path = ".".join(str(part) for part in first["loc"] if isinstance(part, str))
	return path, first["msg"]


def parse_config(payload: Dict[str, Any]) -> RunConfig:
	try:
		return RunConfig.model_validate(payload or {})
	except ValidationError as exc:
		path, message = _dotted_path(exc)
		raise ConfigError(message, path=path) from exc


def load_config(path: str | Path) -> RunConfig:
	"""Load a YAML (``.yaml``/``.yml``) or JSON configuration file."""

	path = Path(path)
	try:
		text = path.read_text(encoding="utf-8")
	except OSError as exc:
		raise ConfigError(f"cannot read configuration: {exc}") from exc
	try:
		if path.suffix.lower() in {".yaml", ".yml"}:
			payload = yaml.safe_load(text)
		elif path.suffix.lower() == ".json":
			payload = json.loads(text)
		else:
			raise ConfigError(f"unsupported configuration format '{path.suffix}'")
	except (yaml.YAMLError, json.JSONDecodeError) as exc:
		raise ConfigError(f"cannot parse {path.name}: {exc}") from exc
	if payload is not None and not isinstance(payload, dict):
		raise ConfigError("configuration must be a mapping")
	LOGGER.debug("Loaded configuration from %s", path)
	return parse_config(payload or {})


def dump_config(config: RunConfig) -> str:
	return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def config_hash(config: RunConfig) -> str:
	return stable_hash(config.model_dump(mode="json"))
