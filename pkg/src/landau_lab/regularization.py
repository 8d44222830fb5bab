"""Cutoffs λ_ε, β_ε, η_ε, the moment-matched bump ξ and the jump operators Q^ε / Q̄^ε."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import roots_legendre

from .geometry import DomainSpec, PhasePoint, normal_coordinates
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()


class OutOfRange(ValueError):
	"""Raised when a shifted velocity stencil leaves the box and extension is disabled."""


def _glue(t: np.ndarray) -> np.ndarray:
	t = np.asarray(t, dtype=float)
	out = np.zeros_like(t)
	positive = t > 0
	out[positive] = np.exp(-1.0 / t[positive])
	return out


def _glue_prime(t: np.ndarray) -> np.ndarray:
	t = np.asarray(t, dtype=float)
	out = np.zeros_like(t)
	positive = t > 0
	out[positive] = np.exp(-1.0 / t[positive]) / t[positive] ** 2
	return out


def smooth_step(t: np.ndarray) -> np.ndarray:
	"""C^∞ monotone bridge: 0 for t ≤ 0, 1 for t ≥ 1."""

	t = np.asarray(t, dtype=float)
	left = _glue(t)
	right = _glue(1.0 - t)
	return left / (left + right)


def smooth_step_prime(t: np.ndarray) -> np.ndarray:
	t = np.asarray(t, dtype=float)
	left, right = _glue(t), _glue(1.0 - t)
	numerator = _glue_prime(t) * right + left * _glue_prime(1.0 - t)
	return numerator / (left + right) ** 2


@dataclass(frozen=True)
class CutoffFamily:
	"""λ_ε and the derived cutoffs for one ε."""

	epsilon: float

	def __post_init__(self) -> None:
		if not 0.0 < self.epsilon < 0.5:
			raise ValueError("epsilon must lie in (0, 1/2)")

	@property
	def flat_zone(self) -> float:
		return self.epsilon**4

	def lambda_(self, s: np.ndarray) -> np.ndarray:
		s = np.abs(np.asarray(s, dtype=float))
		return smooth_step((s - self.flat_zone) / self.flat_zone)

	def lambda_prime(self, s: np.ndarray) -> np.ndarray:
		s = np.asarray(s, dtype=float)
		return smooth_step_prime((np.abs(s) - self.flat_zone) / self.flat_zone) * np.sign(s) / self.flat_zone

	def check_domain(self, geom: DomainSpec) -> None:
		"""ε must sit below δ0; warn when the η_ε ramp is cut by the Ω_bd edge."""

		if self.epsilon >= geom.delta0:
			raise ValueError(f"epsilon={self.epsilon} must be below delta0={geom.delta0}")
		if 2.0**0.25 * self.epsilon >= geom.delta0:
			LOGGER.warning(
				"η_ε ramp (up to %.4f) reaches the edge of Ω_bd (delta0=%.4f); η_ε is discontinuous there",
				2.0**0.25 * self.epsilon,
				geom.delta0,
			)


def lambda_eps(fam: CutoffFamily, s: float) -> float:
	return float(fam.lambda_(s))


def beta_field(fam: CutoffFamily, v: np.ndarray, v_perp: np.ndarray, in_bd: np.ndarray) -> np.ndarray:
	"""β_ε(v) = λ_ε(v_⊥)v inside Ω_bd, v elsewhere (vectorized)."""

	scale = np.where(in_bd, fam.lambda_(v_perp), 1.0)
	return np.asarray(v, dtype=float) * scale[..., None]


def eta_field(fam: CutoffFamily, x_perp: np.ndarray, in_bd: np.ndarray) -> np.ndarray:
	return np.where(in_bd, fam.lambda_(np.asarray(x_perp, dtype=float) ** 4), 1.0)


def drift_field(fam: CutoffFamily, geom: DomainSpec, x: np.ndarray, v: np.ndarray) -> np.ndarray:
	"""W_ε(x, v) = β_ε(v) + (v − β_ε(v))η_ε(x) on broadcast arrays of points."""

	x = np.asarray(x, dtype=float)
	v = np.asarray(v, dtype=float)
	x_perp, normal = geom.normal_frame(x)
	in_bd = x_perp < geom.delta0
	v_perp = np.sum(v * normal, axis=-1)
	beta = beta_field(fam, v, v_perp, in_bd)
	eta = eta_field(fam, x_perp, in_bd)
	return beta + (v - beta) * eta[..., None]


def eta_gradient(fam: CutoffFamily, geom: DomainSpec, x: np.ndarray) -> np.ndarray:
	"""∇_x η_ε = λ_ε'(x_⊥⁴)·4x_⊥³·∇x_⊥ with ∇x_⊥ = −n_x̂ inside Ω_bd."""

	x_perp, normal = geom.normal_frame(np.asarray(x, dtype=float))
	in_bd = x_perp < geom.delta0
	slope = np.where(in_bd, fam.lambda_prime(x_perp**4) * 4.0 * x_perp**3, 0.0)
	return -slope[..., None] * normal


def beta_eps(fam: CutoffFamily, geom: DomainSpec, p: PhasePoint) -> np.ndarray:
	coords = normal_coordinates(geom, p)
	if not coords.in_bd:
		return p.v.copy()
	return fam.lambda_(coords.v_perp) * p.v


def eta_eps(fam: CutoffFamily, geom: DomainSpec, x: Sequence[float]) -> float:
	coords = normal_coordinates(geom, PhasePoint.of(x, (0.0, 0.0, 0.0)))
	if not coords.in_bd:
		return 1.0
	return float(fam.lambda_(coords.x_perp**4))


def regularized_drift(fam: CutoffFamily, geom: DomainSpec, p: PhasePoint) -> np.ndarray:
	beta = beta_eps(fam, geom, p)
	eta = eta_eps(fam, geom, p.x)
	return beta + (p.v - beta) * eta


@dataclass(frozen=True)
class BumpKernel:
	"""Tensor bump ξ(u) = ξ₁(u₁)ξ₁(u₂)ξ₁(u₃) through its Gauss-Legendre table.

	The base profile e^{−1/(1−t²)} is normalized on the quadrature and its width
	rescaled so that the discrete moments are exactly (1, 0, 1).
	"""

	nodes: np.ndarray
	weights: np.ndarray
	width: float
	normalization: float

	@classmethod
	def build(cls, order: int = 16) -> "BumpKernel":
		if order < 2:
			raise ValueError("bump quadrature order must be at least 2")
		t, omega = roots_legendre(order)
		profile = omega * np.exp(-1.0 / (1.0 - t * t))
		mass = float(np.sum(profile))
		weights = profile / mass
		# symmetrize against roundoff in the node table
		weights = 0.5 * (weights + weights[::-1])
		width = 1.0 / math.sqrt(float(np.sum(weights * t * t)))
		return cls(nodes=width * t, weights=weights, width=width, normalization=mass)

	@property
	def order(self) -> int:
		return len(self.nodes)

	def profile(self, u: np.ndarray) -> np.ndarray:
		"""Continuous density ξ₁(u) matching the discrete table."""

		t = np.asarray(u, dtype=float) / self.width
		inside = np.abs(t) < 1.0
		out = np.zeros_like(t)
		out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
		return out / (self.normalization * self.width)

	def moments(self) -> Tuple[float, float, float]:
		return (
			float(np.sum(self.weights)),
			float(np.sum(self.weights * self.nodes)),
			float(np.sum(self.weights * self.nodes**2)),
		)

	def tensor_rule(self) -> Tuple[np.ndarray, np.ndarray]:
		"""3D nodes (order³, 3) and weights (order³,)."""

		grids = np.meshgrid(self.nodes, self.nodes, self.nodes, indexing="ij")
		wgrids = np.meshgrid(self.weights, self.weights, self.weights, indexing="ij")
		nodes = np.stack([g.ravel() for g in grids], axis=-1)
		weights = wgrids[0].ravel() * wgrids[1].ravel() * wgrids[2].ravel()
		return nodes, weights


@dataclass(frozen=True)
class VelocitySlice:
	"""Values on a cell-centred velocity grid, extended by zero beyond the box."""

	axis: np.ndarray
	values: np.ndarray

	@property
	def spacing(self) -> float:
		return float(self.axis[1] - self.axis[0])

	@property
	def v_max(self) -> float:
		return float(self.axis[-1] + 0.5 * self.spacing)

	def __call__(self, points: np.ndarray) -> np.ndarray:
		h = self.spacing
		padded_axis = np.concatenate([[self.axis[0] - h], self.axis, [self.axis[-1] + h]])
		padded = np.pad(self.values, 1)
		interpolator = RegularGridInterpolator(
			(padded_axis,) * 3, padded, method="linear", bounds_error=False, fill_value=0.0
		)
		return interpolator(np.asarray(points, dtype=float))


VelocityFunction = Union[Callable[[np.ndarray], np.ndarray], VelocitySlice]


def _jump_average(
	fam: CutoffFamily,
	kernel: BumpKernel,
	f: VelocityFunction,
	v: np.ndarray,
	sign: float,
	extend: bool,
) -> np.ndarray:
	v = np.asarray(v, dtype=float)
	nodes, weights = kernel.tensor_rule()
	points = v[..., None, :] + sign * fam.epsilon * nodes
	if isinstance(f, VelocitySlice):
		outside = np.any(np.abs(points) > f.v_max, axis=-1)
		if np.any(outside):
			if not extend:
				raise OutOfRange("shifted velocity stencil leaves the box")
			LOGGER.warning("Velocity stencil leaves the box at %d node(s); extending by zero", int(np.sum(outside)))
	values = np.asarray(f(points), dtype=float)
	return (2.0 / fam.epsilon**2) * (values @ weights - np.asarray(f(v), dtype=float))


def q_eps(fam: CutoffFamily, kernel: BumpKernel, f: VelocityFunction, v: np.ndarray, extend: bool = True) -> np.ndarray:
	"""Q^ε[f](v) = (2/ε²)∫[f(v+εu) − f(v)]ξ(u)du on the bump quadrature."""

	return _jump_average(fam, kernel, f, v, 1.0, extend)


def q_eps_adjoint(fam: CutoffFamily, kernel: BumpKernel, psi: VelocityFunction, v: np.ndarray, extend: bool = True) -> np.ndarray:
	"""Q̄^ε[ψ](v) = (2/ε²)∫[ψ(v−εu) − ψ(v)]ξ(u)du."""

	return _jump_average(fam, kernel, psi, v, -1.0, extend)


# Grid operators ----------------------------------------------------------------


def shift_axis(values: np.ndarray, axis: int, delta: float, periodic: bool = False) -> np.ndarray:
	"""Evaluate ``values`` at ``index + delta`` along ``axis`` by linear interpolation.

	Outside the array the field is zero unless ``periodic``. The transpose of a
	shift by ``delta`` is the shift by ``-delta``.
	"""

	base = math.floor(delta)
	frac = delta - base
	out = (1.0 - frac) * _integer_shift(values, axis, base, periodic)
	if frac:
		out = out + frac * _integer_shift(values, axis, base + 1, periodic)
	return out


def _integer_shift(values: np.ndarray, axis: int, k: int, periodic: bool) -> np.ndarray:
	if periodic:
		return np.roll(values, -k, axis=axis)
	out = np.zeros_like(values)
	n = values.shape[axis]
	if abs(k) >= n:
		return out
	src = [slice(None)] * values.ndim
	dst = [slice(None)] * values.ndim
	if k >= 0:
		src[axis] = slice(k, n)
		dst[axis] = slice(0, n - k)
	else:
		src[axis] = slice(0, n + k)
		dst[axis] = slice(-k, n)
	out[tuple(dst)] = values[tuple(src)]
	return out


def axis_average(
	values: np.ndarray,
	kernel: BumpKernel,
	epsilon: float,
	spacing: float,
	axes: Sequence[int] = (-3, -2, -1),
	adjoint: bool = False,
	periodic: bool = False,
) -> np.ndarray:
	"""Σ_q W_q f(v ± εu_q) on the grid as a product of one-dimensional averages."""

	sign = -1.0 if adjoint else 1.0
	out = values
	for axis in axes:
		out = sum(
			weight * shift_axis(out, axis, sign * epsilon * node / spacing, periodic)
			for node, weight in zip(kernel.nodes, kernel.weights)
		)
	return out


def q_eps_grid(
	values: np.ndarray,
	kernel: BumpKernel,
	epsilon: float,
	spacing: float,
	axes: Sequence[int] = (-3, -2, -1),
	adjoint: bool = False,
	periodic: bool = False,
) -> np.ndarray:
	"""Q^ε (or Q̄^ε) over the velocity axes of a grid field."""

	averaged = axis_average(values, kernel, epsilon, spacing, axes=axes, adjoint=adjoint, periodic=periodic)
	return (2.0 / epsilon**2) * (averaged - values)


def stencil_exits_box(kernel: BumpKernel, epsilon: float, v_axis: np.ndarray) -> bool:
	h = float(v_axis[1] - v_axis[0])
	return float(np.max(np.abs(v_axis))) + epsilon * kernel.width > float(v_axis[-1]) + 0.5 * h


def cutoff_defect_sweep(
	fam: CutoffFamily,
	geom: DomainSpec,
	samples: int = 2000,
	rng: Optional[np.random.Generator] = None,
) -> float:
	"""max |W_ε(x, v)| over the grazing neighborhood {x_⊥ ≤ ε, |v_⊥| ≤ ε⁴} of ``geom``.

	W_ε vanishes there identically, so any nonzero value is a cutoff defect.
	"""

	fam.check_domain(geom)
	rng = rng or np.random.default_rng(0)
	boundary = geom.sample_boundary(samples, rng)
	normal = geom.outward_normal_field(boundary)
	depth = rng.uniform(0.0, fam.epsilon, samples)
	x = boundary - depth[:, None] * normal
	tangent = np.cross(normal, rng.normal(size=(samples, 3)))
	v_perp = rng.uniform(-fam.flat_zone, fam.flat_zone, samples)
	v = tangent + v_perp[:, None] * normal
	return float(np.max(np.linalg.norm(drift_field(fam, geom, x, v), axis=-1)))
