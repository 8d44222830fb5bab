"""Phase grids, kinetic fields and linear interpolation in phase space."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import Slab
from .utils import chunk_slices, ordered_map, setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()

INTERP_CHUNK = 1 << 18


def cell_centres(lower: float, upper: float, count: int) -> np.ndarray:
	h = (upper - lower) / count
	return lower + h * (np.arange(count) + 0.5)


@dataclass(frozen=True)
class VelocityGrid:
	"""Cell-centred grid with ``n`` cells per axis on [−V_max, V_max]³."""

	n: int
	v_max: float

	def __post_init__(self) -> None:
		if self.n < 2 or self.v_max <= 0:
			raise ValueError("velocity grid needs n >= 2 and v_max > 0")

	@cached_property
	def axis(self) -> np.ndarray:
		return cell_centres(-self.v_max, self.v_max, self.n)

	@property
	def h(self) -> float:
		return 2.0 * self.v_max / self.n

	@property
	def cell_volume(self) -> float:
		return self.h**3

	@cached_property
	def mesh(self) -> np.ndarray:
		grids = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
		return np.stack(grids, axis=-1)

	@cached_property
	def speed(self) -> np.ndarray:
		return np.linalg.norm(self.mesh, axis=-1)

	@property
	def shape(self) -> Tuple[int, int, int]:
		return (self.n, self.n, self.n)

	def integrate(self, values: np.ndarray) -> np.ndarray:
		"""Midpoint rule over the trailing three velocity axes."""

		return np.sum(values, axis=(-3, -2, -1)) * self.cell_volume


@dataclass(frozen=True)
class PhaseGrid:
	"""Slab x-grid (periodic x₁, x₂; cell-centred across |x₃| < w) times a velocity grid."""

	domain: Slab
	nx: Tuple[int, int, int]
	velocity: VelocityGrid

	def __post_init__(self) -> None:
		if not isinstance(self.domain, Slab):
			raise TypeError("the phase-grid solver runs on the slab domain")
		if any(n < 1 for n in self.nx) or self.nx[2] < 2:
			raise ValueError("x-grid needs positive cell counts and at least two cells across the slab")

	@classmethod
	def build(cls, domain: Slab, nx: Tuple[int, int, int], nv: int, v_max: float) -> "PhaseGrid":
		return cls(domain=domain, nx=tuple(int(n) for n in nx), velocity=VelocityGrid(int(nv), float(v_max)))

	@cached_property
	def x_axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
		period = self.domain.period
		width = self.domain.half_width
		return (
			cell_centres(0.0, period, self.nx[0]),
			cell_centres(0.0, period, self.nx[1]),
			cell_centres(-width, width, self.nx[2]),
		)

	@property
	def h_x(self) -> Tuple[float, float, float]:
		return (
			self.domain.period / self.nx[0],
			self.domain.period / self.nx[1],
			2.0 * self.domain.half_width / self.nx[2],
		)

	@property
	def h_v(self) -> float:
		return self.velocity.h

	@property
	def x_cell_volume(self) -> float:
		h1, h2, h3 = self.h_x
		return h1 * h2 * h3

	@property
	def cell_volume(self) -> float:
		return self.x_cell_volume * self.velocity.cell_volume

	@property
	def wall_area_element(self) -> float:
		h1, h2, _ = self.h_x
		return h1 * h2

	@property
	def shape(self) -> Tuple[int, ...]:
		return tuple(self.nx) + self.velocity.shape

	@property
	def x_shape(self) -> Tuple[int, int, int]:
		return tuple(self.nx)

	@cached_property
	def x_mesh(self) -> np.ndarray:
		grids = np.meshgrid(*self.x_axes, indexing="ij")
		return np.stack(grids, axis=-1)

	@cached_property
	def x_perp(self) -> np.ndarray:
		return self.domain.half_width - np.abs(self.x_mesh[..., 2])

	@cached_property
	def in_bd(self) -> np.ndarray:
		"""Boundary-band mask Ω_bd = {x_⊥ < δ0} per x node."""

		return self.x_perp < self.domain.delta0

	def zeros(self) -> np.ndarray:
		return np.zeros(self.shape)

	def phase_points(self) -> Tuple[np.ndarray, np.ndarray]:
		"""Broadcast (x, v) arrays of shape ``shape + (3,)``."""

		x = self.x_mesh[:, :, :, None, None, None, :]
		v = self.velocity.mesh[None, None, None, :, :, :, :]
		return np.broadcast_to(x, self.shape + (3,)), np.broadcast_to(v, self.shape + (3,))

	def integrate(self, values: np.ndarray) -> float:
		return float(np.sum(values) * self.cell_volume)

	def integrate_x(self, values: np.ndarray) -> np.ndarray:
		"""Integrate over the three leading x axes."""

		return np.sum(values, axis=(0, 1, 2)) * self.x_cell_volume

	def wall_normal_speed(self) -> Tuple[np.ndarray, np.ndarray]:
		"""v·n at the upper (n = +e₃) and lower (n = −e₃) walls on the velocity grid."""

		v3 = self.velocity.mesh[..., 2]
		return v3, -v3


@dataclass
class KineticField:
	"""One time slice of a phase-space field with its weight tag."""

	values: np.ndarray
	time: float = 0.0
	theta: float = 0.0

	def __post_init__(self) -> None:
		self.values = np.asarray(self.values, dtype=float)
		if not np.all(np.isfinite(self.values)):
			raise ValueError(f"KineticField at t={self.time} holds non-finite values")

	def sup(self) -> float:
		return float(np.max(np.abs(self.values))) if self.values.size else 0.0

	def l1(self, grid: PhaseGrid) -> float:
		return float(np.sum(np.abs(self.values)) * grid.cell_volume)

	def l2(self, grid: PhaseGrid) -> float:
		return float(np.sqrt(np.sum(self.values * self.values) * grid.cell_volume))

	def at(self, time: float) -> "KineticField":
		return replace(self, time=time)


def padded_axes(grid: PhaseGrid) -> Tuple[np.ndarray, ...]:
	"""Axes of the phase array padded by one node per side."""

	axes = []
	for axis, h in zip(grid.x_axes, grid.h_x):
		axes.append(np.concatenate([[axis[0] - h], axis, [axis[-1] + h]]))
	v = grid.velocity.axis
	hv = grid.h_v
	v_padded = np.concatenate([[v[0] - hv], v, [v[-1] + hv]])
	return tuple(axes) + (v_padded,) * 3


def pad_phase(values: np.ndarray, lower_ghost: Optional[np.ndarray] = None, upper_ghost: Optional[np.ndarray] = None) -> np.ndarray:
	"""Pad x₁/x₂ periodically, x₃ with ghost layers (edge values by default), v with zeros."""

	out = np.pad(values, [(1, 1), (1, 1), (0, 0), (0, 0), (0, 0), (0, 0)], mode="wrap")
	lower = out[:, :, :1] if lower_ghost is None else _wrap_layer(lower_ghost)[:, :, None]
	upper = out[:, :, -1:] if upper_ghost is None else _wrap_layer(upper_ghost)[:, :, None]
	out = np.concatenate([lower, out, upper], axis=2)
	return np.pad(out, [(0, 0)] * 3 + [(1, 1)] * 3, mode="constant")


def _wrap_layer(layer: np.ndarray) -> np.ndarray:
	return np.pad(layer, [(1, 1), (1, 1), (0, 0), (0, 0), (0, 0)], mode="wrap")


def interpolate_phase(
	grid: PhaseGrid,
	values: np.ndarray,
	x: np.ndarray,
	v: np.ndarray,
	lower_ghost: Optional[np.ndarray] = None,
	upper_ghost: Optional[np.ndarray] = None,
) -> np.ndarray:
	"""Multilinear interpolation at arbitrary phase points.

	x₁, x₂ wrap with the slab period; x₃ beyond the outermost cell centres reads
	the ghost layers (which carry the boundary datum); velocities beyond the box
	read zero.
	"""

	period = grid.domain.period
	axes = padded_axes(grid)
	padded = pad_phase(values, lower_ghost, upper_ghost)
	interpolator = RegularGridInterpolator(axes, padded, method="linear", bounds_error=False, fill_value=0.0)

	x = np.asarray(x, dtype=float).reshape(-1, 3)
	v = np.asarray(v, dtype=float).reshape(-1, 3)
	query = np.empty((len(x), 6))
	query[:, 0] = np.mod(x[:, 0], period)
	query[:, 1] = np.mod(x[:, 1], period)
	query[:, 2] = np.clip(x[:, 2], axes[2][0], axes[2][-1])
	query[:, 3:] = v

	def evaluate(chunk: slice) -> np.ndarray:
		return interpolator(query[chunk])

	pieces = ordered_map(evaluate, chunk_slices(len(query), INTERP_CHUNK))
	return np.concatenate(pieces) if pieces else np.zeros(0)


def wall_layers(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	"""Cell layers adjacent to the lower and upper walls (the discrete traces)."""

	return values[:, :, 0].copy(), values[:, :, -1].copy()


def reflect_velocity_axes(layer: np.ndarray) -> np.ndarray:
	"""Apply R = diag(1, 1, −1) to the velocity argument of a wall layer."""

	return layer[..., ::-1]
