"""Bounded domains Ω = {ζ < 0}: normals, reflection, charts and normal coordinates.

Every domain exposes vectorized ``zeta``/``grad_zeta`` on arrays of shape
``(..., 3)`` and a closest-boundary-point search. Built-in domains override the
search with closed forms; the generic path is a damped Lagrange-Newton
projection with a chart-based fallback.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()

BOUNDARY_TOL = 1e-8
GRAZING_TOL = 1e-12
GRADIENT_TOL = 1e-12
PROJECTION_TOL = 1e-10

Y1, Y2 = sp.symbols("y1 y2", real=True)

# (order in y1, order in y2) for every partial stored on a patch.
DERIVATIVE_ORDERS: Tuple[Tuple[int, int], ...] = (
	(0, 0),
	(1, 0), (0, 1),
	(2, 0), (1, 1), (0, 2),
	(3, 0), (2, 1), (1, 2), (0, 3),
)


class DegenerateGradient(ValueError):
	"""Raised when ∇ζ vanishes where a normal is requested."""


class NotOnBoundary(ValueError):
	"""Raised when a boundary-only operation receives an off-boundary point."""


class OutsideDomain(ValueError):
	"""Raised when a phase point lies outside Ω̄."""


class ChartMiss(LookupError):
	"""Raised when a point inside the tubular neighborhood is not covered by any chart."""


@dataclass(frozen=True)
class RhoDerivatives:
	"""ρ and its partials up to third order at a batch of chart points."""

	r: np.ndarray
	r1: np.ndarray
	r2: np.ndarray
	r11: np.ndarray
	r12: np.ndarray
	r22: np.ndarray
	r111: np.ndarray
	r112: np.ndarray
	r122: np.ndarray
	r222: np.ndarray


@dataclass(frozen=True)
class PhasePoint:
	x: np.ndarray
	v: np.ndarray

	@classmethod
	def of(cls, x: Sequence[float], v: Sequence[float]) -> "PhasePoint":
		return cls(np.asarray(x, dtype=float), np.asarray(v, dtype=float))


@dataclass(frozen=True)
class BoundaryClassification:
	kind: Literal["outgoing", "incoming", "grazing", "interior"]
	n: Optional[np.ndarray]
	v_dot_n: float


@dataclass(frozen=True)
class NormalCoordinates:
	x_perp: float
	v_perp: float
	in_bd: bool
	x_hat: np.ndarray
	normal: np.ndarray


class BoundaryPatch:
	"""Graph chart {p₃ = ρ(p₁, p₂)} of the boundary in a rotated frame.

	Ambient points are ``origin + frame @ p``; the domain lies locally on the
	side p₃ < ρ. ρ is a sympy expression in ``y1, y2`` and all partials up to
	third order are differentiated symbolically once and lambdified.
	"""

	def __init__(
		self,
		expression: sp.Expr,
		chart_box: Tuple[float, float, float, float],
		origin: Sequence[float] = (0.0, 0.0, 0.0),
		frame: Optional[np.ndarray] = None,
		name: str = "patch",
	) -> None:
		frame = np.eye(3) if frame is None else np.asarray(frame, dtype=float)
		if not np.allclose(frame.T @ frame, np.eye(3), atol=1e-12):
			raise ValueError(f"Patch '{name}' frame must be orthonormal")
		if np.linalg.det(frame) < 0:
			raise ValueError(f"Patch '{name}' frame must be right-handed")
		y1_min, y1_max, y2_min, y2_max = chart_box
		if not (y1_min < y1_max and y2_min < y2_max):
			raise ValueError(f"Patch '{name}' has an empty chart box")

		self.name = name
		self.expression = sp.sympify(expression)
		self.chart_box = tuple(float(b) for b in chart_box)
		self.origin = np.asarray(origin, dtype=float)
		self.frame = frame
		self._funcs = {
			orders: sp.lambdify((Y1, Y2), sp.diff(self.expression, Y1, orders[0], Y2, orders[1]), "numpy")
			for orders in DERIVATIVE_ORDERS
		}

	@classmethod
	def from_polynomial(
		cls,
		coefficients: Sequence[Sequence[float]],
		chart_box: Tuple[float, float, float, float],
		origin: Sequence[float] = (0.0, 0.0, 0.0),
		frame: Optional[np.ndarray] = None,
		name: str = "polynomial",
	) -> "BoundaryPatch":
		"""Build ρ = Σ c[i][j]·y₁^i·y₂^j from a coefficient table."""

		expression = sp.Integer(0)
		for i, row in enumerate(coefficients):
			for j, coefficient in enumerate(row):
				if coefficient:
					expression += sp.nsimplify(coefficient) * Y1**i * Y2**j
		return cls(expression, chart_box, origin=origin, frame=frame, name=name)

	def _eval(self, orders: Tuple[int, int], y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
		y1 = np.asarray(y1, dtype=float)
		y2 = np.asarray(y2, dtype=float)
		value = np.asarray(self._funcs[orders](y1, y2), dtype=float)
		return value + np.zeros(np.broadcast(y1, y2).shape)

	def rho(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
		return self._eval((0, 0), y1, y2)

	def derivatives(self, y1: np.ndarray, y2: np.ndarray) -> RhoDerivatives:
		values = [self._eval(orders, y1, y2) for orders in DERIVATIVE_ORDERS]
		if not all(np.all(np.isfinite(value)) for value in values):
			raise ValueError(f"Patch '{self.name}' derivatives are not finite at the requested points")
		return RhoDerivatives(*values)

	def to_patch(self, x: np.ndarray) -> np.ndarray:
		return (np.asarray(x, dtype=float) - self.origin) @ self.frame

	def to_ambient(self, p: np.ndarray) -> np.ndarray:
		return np.asarray(p, dtype=float) @ self.frame.T + self.origin

	def in_box(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
		y1_min, y1_max, y2_min, y2_max = self.chart_box
		return (y1 >= y1_min) & (y1 <= y1_max) & (y2 >= y2_min) & (y2 <= y2_max)

	def contains(self, x_hat: np.ndarray, tol: float = 1e-8) -> np.ndarray:
		"""True where ``x_hat`` is a boundary point inside this chart."""

		p = self.to_patch(x_hat)
		on_graph = np.abs(p[..., 2] - self.rho(p[..., 0], p[..., 1])) <= tol
		return self.in_box(p[..., 0], p[..., 1]) & on_graph

	def normal(self, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
		"""Outward unit normal (ambient frame) at the graph point over (y₁, y₂)."""

		d = self.derivatives(y1, y2)
		local = np.stack([-d.r1, -d.r2, np.ones_like(d.r)], axis=-1)
		local /= np.linalg.norm(local, axis=-1, keepdims=True)
		return local @ self.frame.T

	def project(self, x: np.ndarray, max_iter: int = 60) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
		"""Closest graph point to ``x`` by damped Newton on the chart parameters.

		Returns ``(x_hat, distance, converged)``.
		"""

		p = self.to_patch(np.atleast_2d(x))
		y = p[:, :2].copy()
		converged = np.zeros(len(p), dtype=bool)
		for _ in range(max_iter):
			d = self.derivatives(y[:, 0], y[:, 1])
			gap = p[:, 2] - d.r
			grad = np.stack([y[:, 0] - p[:, 0] - gap * d.r1, y[:, 1] - p[:, 1] - gap * d.r2], axis=-1)
			hess = np.empty((len(p), 2, 2))
			hess[:, 0, 0] = 1.0 + d.r1 * d.r1 - gap * d.r11
			hess[:, 0, 1] = hess[:, 1, 0] = d.r1 * d.r2 - gap * d.r12
			hess[:, 1, 1] = 1.0 + d.r2 * d.r2 - gap * d.r22
			step = np.linalg.solve(hess, grad[..., None])[..., 0]
			# fall back to gradient steps where the Hessian is not positive definite
			indefinite = np.linalg.eigvalsh(hess)[:, 0] <= 1e-12
			step[indefinite] = grad[indefinite]
			y = y - step
			converged = np.linalg.norm(step, axis=-1) <= PROJECTION_TOL * (1.0 + np.linalg.norm(y, axis=-1))
			if np.all(converged):
				break
		graph = np.stack([y[:, 0], y[:, 1], self.rho(y[:, 0], y[:, 1])], axis=-1)
		x_hat = self.to_ambient(graph)
		distance = np.linalg.norm(np.atleast_2d(x) - x_hat, axis=-1)
		return x_hat, distance, converged

	def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
		"""Random ambient boundary points inside the (finite part of the) chart box."""

		y1_min, y1_max, y2_min, y2_max = (float(np.clip(b, -10.0, 10.0)) for b in self.chart_box)
		y1 = rng.uniform(y1_min, y1_max, count)
		y2 = rng.uniform(y2_min, y2_max, count)
		return self.to_ambient(np.stack([y1, y2, self.rho(y1, y2)], axis=-1))


class DomainSpec:
	"""Base class for Ω = {ζ < 0} with the generic closest-point search."""

	name = "domain"

	def __init__(
		self,
		delta0: float,
		patches: Optional[List[BoundaryPatch]] = None,
		symmetry_axis: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
	) -> None:
		if delta0 <= 0:
			raise ValueError("delta0 must be positive")
		self.delta0 = float(delta0)
		self.patches: List[BoundaryPatch] = list(patches or [])
		self.symmetry_axis: Optional[Tuple[np.ndarray, np.ndarray]] = None
		if symmetry_axis is not None:
			x0, omega = (np.asarray(item, dtype=float) for item in symmetry_axis)
			self.symmetry_axis = (x0, omega / np.linalg.norm(omega))

	# Level set -------------------------------------------------------------
	def zeta(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
		raise NotImplementedError

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
		raise NotImplementedError

	def hessian_zeta(self, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		columns = []
		for k in range(3):
			shift = np.zeros(3)
			shift[k] = h
			columns.append((self.grad_zeta(x + shift) - self.grad_zeta(x - shift)) / (2 * h))
		return np.stack(columns, axis=-1)

	# Closest boundary point -------------------------------------------------
	def closest_point(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		"""Closest boundary point and distance, vectorized over ``x[..., 3]``."""

		x = np.asarray(x, dtype=float)
		flat = x.reshape(-1, 3)
		x_hat, converged = _lagrange_projection(self, flat)
		if not np.all(converged):
			x_hat[~converged] = self._chart_fallback(flat[~converged])
		distance = np.linalg.norm(flat - x_hat, axis=-1)
		return x_hat.reshape(x.shape), distance.reshape(x.shape[:-1])

	def _chart_fallback(self, x: np.ndarray) -> np.ndarray:
		if not self.patches:
			raise ChartMiss(f"Closest-point search failed for {len(x)} point(s) and '{self.name}' has no charts")
		best = np.full(len(x), np.inf)
		result = np.zeros_like(x)
		for patch in self.patches:
			x_hat, distance, converged = patch.project(x)
			p = patch.to_patch(x_hat)
			valid = converged & patch.in_box(p[:, 0], p[:, 1])
			better = valid & (distance < best)
			best[better] = distance[better]
			result[better] = x_hat[better]
		if np.any(~np.isfinite(best)):
			raise ChartMiss("No chart contains the closest boundary point")
		return result

	def outward_normal_field(self, x_hat: np.ndarray) -> np.ndarray:
		grad = self.grad_zeta(x_hat)
		return grad / np.linalg.norm(grad, axis=-1, keepdims=True)

	def normal_frame(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		"""Return ``(x_perp, n_x̂)`` for a batch of points."""

		x_hat, distance = self.closest_point(x)
		return distance, self.outward_normal_field(x_hat)

	# Sampling ---------------------------------------------------------------
	def sample_boundary(self, count: int, rng: np.random.Generator) -> np.ndarray:
		if not self.patches:
			raise NotImplementedError(f"'{self.name}' cannot sample its boundary")
		chunks = np.array_split(np.arange(count), len(self.patches))
		return np.concatenate([patch.sample(len(idx), rng) for patch, idx in zip(self.patches, chunks)])

	# Validation -------------------------------------------------------------
	def validate(self, rng: Optional[np.random.Generator] = None, samples: int = 64) -> None:
		"""Check chart consistency with ζ and δ0 coverage by sampling."""

		rng = rng or np.random.default_rng(0)
		for patch in self.patches:
			points = patch.sample(samples, rng)
			residual = np.max(np.abs(self.zeta(points))) if len(points) else 0.0
			if residual > 1e-10 * max(1.0, float(np.max(np.abs(points)))):
				raise ValueError(f"Patch '{patch.name}' is off the level set of '{self.name}' by {residual:.3e}")
		if not self.patches:
			return
		boundary = self.sample_boundary(samples, rng)
		normals = self.outward_normal_field(boundary)
		depth = rng.uniform(0.0, self.delta0, len(boundary))[:, None]
		inner = boundary - depth * normals
		x_hat, _ = self.closest_point(inner)
		covered = np.zeros(len(inner), dtype=bool)
		for patch in self.patches:
			covered |= patch.contains(x_hat, tol=1e-7)
		if not np.all(covered):
			raise ChartMiss(f"delta0={self.delta0} neighborhood of '{self.name}' is not covered by its charts")


def _lagrange_projection(spec: DomainSpec, x: np.ndarray, max_iter: int = 50) -> Tuple[np.ndarray, np.ndarray]:
	"""Damped Newton on p − x + λ∇ζ(p) = 0, ζ(p) = 0."""

	p = x.copy()
	for _ in range(5):
		grad = spec.grad_zeta(p)
		norm2 = np.maximum(np.sum(grad * grad, axis=-1), GRADIENT_TOL)
		p = p - (spec.zeta(p) / norm2)[:, None] * grad
	grad = spec.grad_zeta(p)
	lam = np.sum((x - p) * grad, axis=-1) / np.maximum(np.sum(grad * grad, axis=-1), GRADIENT_TOL)

	def residual(p_: np.ndarray, lam_: np.ndarray) -> np.ndarray:
		return np.concatenate([p_ - x + lam_[:, None] * spec.grad_zeta(p_), spec.zeta(p_)[:, None]], axis=-1)

	res = residual(p, lam)
	for _ in range(max_iter):
		norm = np.linalg.norm(res, axis=-1)
		if np.all(norm <= PROJECTION_TOL):
			break
		grad = spec.grad_zeta(p)
		jac = np.zeros((len(p), 4, 4))
		jac[:, :3, :3] = np.eye(3) + lam[:, None, None] * spec.hessian_zeta(p)
		jac[:, :3, 3] = grad
		jac[:, 3, :3] = grad
		try:
			step = np.linalg.solve(jac, -res[..., None])[..., 0]
		except np.linalg.LinAlgError:
			break
		damping = np.ones(len(p))
		for _ in range(20):
			trial_p = p + damping[:, None] * step[:, :3]
			trial_lam = lam + damping * step[:, 3]
			trial_res = residual(trial_p, trial_lam)
			worse = np.linalg.norm(trial_res, axis=-1) > norm
			if not np.any(worse):
				break
			damping[worse] *= 0.5
		p, lam, res = trial_p, trial_lam, trial_res
	converged = np.linalg.norm(res, axis=-1) <= PROJECTION_TOL * 10
	return p, converged


# Built-in domains ------------------------------------------------------------


class HalfSpace(DomainSpec):
	"""Ω = {x₃ < 0}."""

	name = "half_space"

	def __init__(self, delta0: float = 0.5) -> None:
		inf = math.inf
		super().__init__(delta0, [BoundaryPatch(sp.Integer(0), (-inf, inf, -inf, inf), name="plane")])

	def zeta(self, x: np.ndarray) -> np.ndarray:
		return np.asarray(x, dtype=float)[..., 2]

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		grad = np.zeros_like(x)
		grad[..., 2] = 1.0
		return grad

	def closest_point(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		x = np.asarray(x, dtype=float)
		x_hat = x.copy()
		x_hat[..., 2] = 0.0
		return x_hat, np.abs(x[..., 2])


class Slab(DomainSpec):
	"""Ω = {|x₃| < w}, periodic with period L in x₁ and x₂."""

	name = "slab"

	def __init__(self, half_width: float = 1.0, period: float = 2.0, delta0: float = 0.5) -> None:
		if half_width <= 0 or period <= 0:
			raise ValueError("Slab half_width and period must be positive")
		if delta0 > half_width:
			raise ValueError("Slab delta0 cannot exceed the half width")
		inf = math.inf
		flip = np.diag([1.0, -1.0, -1.0])
		patches = [
			BoundaryPatch(sp.Float(half_width), (-inf, inf, -inf, inf), name="upper_wall"),
			BoundaryPatch(sp.Float(half_width), (-inf, inf, -inf, inf), frame=flip, name="lower_wall"),
		]
		super().__init__(delta0, patches)
		self.half_width = float(half_width)
		self.period = float(period)

	def zeta(self, x: np.ndarray) -> np.ndarray:
		x3 = np.asarray(x, dtype=float)[..., 2]
		return (x3 * x3 - self.half_width**2) / (2.0 * self.half_width)

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		grad = np.zeros_like(x)
		grad[..., 2] = x[..., 2] / self.half_width
		return grad

	def wall_sign(self, x: np.ndarray) -> np.ndarray:
		"""+1 where the upper wall is the closer one (ties go to the upper wall)."""

		return np.where(np.asarray(x, dtype=float)[..., 2] >= 0.0, 1.0, -1.0)

	def closest_point(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		x = np.asarray(x, dtype=float)
		sign = self.wall_sign(x)
		x_hat = x.copy()
		x_hat[..., 2] = sign * self.half_width
		return x_hat, np.abs(self.half_width - sign * x[..., 2])

	def outward_normal_field(self, x_hat: np.ndarray) -> np.ndarray:
		normal = np.zeros_like(np.asarray(x_hat, dtype=float))
		normal[..., 2] = self.wall_sign(x_hat)
		return normal


class Ball(DomainSpec):
	"""Ω = {|x − c| < R}; rotationally symmetric about every axis through c."""

	name = "ball"

	def __init__(self, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0, 0.0), delta0: float = 0.3) -> None:
		if radius <= 0:
			raise ValueError("Ball radius must be positive")
		self.radius = float(radius)
		self.center = np.asarray(center, dtype=float)
		super().__init__(delta0, _axis_patches(self.center, (radius, radius, radius)), symmetry_axis=(self.center, (0.0, 0.0, 1.0)))

	def zeta(self, x: np.ndarray) -> np.ndarray:
		d = np.asarray(x, dtype=float) - self.center
		return np.sum(d * d, axis=-1) - self.radius**2

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		return 2.0 * (np.asarray(x, dtype=float) - self.center)

	def closest_point(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		d = np.asarray(x, dtype=float) - self.center
		r = np.linalg.norm(d, axis=-1, keepdims=True)
		at_center = r[..., 0] < 1e-300
		direction = np.where(r > 1e-300, d / np.where(r > 1e-300, r, 1.0), np.array([0.0, 0.0, 1.0]))
		if np.any(at_center):
			LOGGER.debug("Closest point requested at the ball center; choosing +e3")
		x_hat = self.center + self.radius * direction
		return x_hat, np.abs(self.radius - r[..., 0])


class Ellipsoid(DomainSpec):
	"""Ω = {Σ((x−c)_i/a_i)² < 1}; closest points by the generic projection."""

	name = "ellipsoid"

	def __init__(
		self,
		semi_axes: Sequence[float] = (2.0, 1.0, 1.0),
		center: Sequence[float] = (0.0, 0.0, 0.0),
		delta0: float = 0.2,
	) -> None:
		axes = np.asarray(semi_axes, dtype=float)
		if axes.shape != (3,) or np.any(axes <= 0):
			raise ValueError("Ellipsoid needs three positive semi-axes")
		self.semi_axes = axes
		self.center = np.asarray(center, dtype=float)
		super().__init__(delta0, _axis_patches(self.center, tuple(axes)))

	def zeta(self, x: np.ndarray) -> np.ndarray:
		d = (np.asarray(x, dtype=float) - self.center) / self.semi_axes
		return np.sum(d * d, axis=-1) - 1.0

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		return 2.0 * (np.asarray(x, dtype=float) - self.center) / self.semi_axes**2

	def hessian_zeta(self, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		return np.broadcast_to(np.diag(2.0 / self.semi_axes**2), x.shape[:-1] + (3, 3)).copy()


class GraphPatchDomain(DomainSpec):
	"""Ω = {x₃ < ρ(x₁, x₂)} for a single graph patch."""

	name = "graph_patch"

	def __init__(self, patch: BoundaryPatch, delta0: float = 0.2) -> None:
		if not np.allclose(patch.frame, np.eye(3)) or np.any(patch.origin != 0):
			raise ValueError("GraphPatchDomain expects a patch in the ambient frame")
		super().__init__(delta0, [patch])
		self.patch = patch

	def zeta(self, x: np.ndarray) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		return x[..., 2] - self.patch.rho(x[..., 0], x[..., 1])

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		d = self.patch.derivatives(x[..., 0], x[..., 1])
		return np.stack([-d.r1, -d.r2, np.ones_like(d.r)], axis=-1)

	def closest_point(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		x = np.asarray(x, dtype=float)
		x_hat, distance, converged = self.patch.project(x.reshape(-1, 3))
		if not np.all(converged):
			raise ChartMiss("Graph projection did not converge")
		return x_hat.reshape(x.shape), distance.reshape(x.shape[:-1])


def _axis_patches(center: np.ndarray, semi_axes: Tuple[float, float, float]) -> List[BoundaryPatch]:
	"""Six graph charts p₃ = a₃'·sqrt(1 − (p₁/a₁')² − (p₂/a₂')²) around the coordinate axes."""

	patches: List[BoundaryPatch] = []
	for axis in range(3):
		for sign in (1.0, -1.0):
			normal = np.zeros(3)
			normal[axis] = sign
			first = np.zeros(3)
			first[(axis + 1) % 3] = 1.0
			second = np.cross(normal, first)
			frame = np.stack([first, second, normal], axis=-1)
			a1 = semi_axes[(axis + 1) % 3]
			a2 = semi_axes[int(np.argmax(np.abs(second)))]
			a3 = semi_axes[axis]
			expression = a3 * sp.sqrt(1 - (Y1 / a1) ** 2 - (Y2 / a2) ** 2)
			box = (-0.65 * a1, 0.65 * a1, -0.65 * a2, 0.65 * a2)
			patches.append(BoundaryPatch(expression, box, origin=center, frame=frame, name=f"{'+' if sign > 0 else '-'}e{axis + 1}"))
	return patches


BUILTIN_DOMAINS: Dict[str, Any] = {
	"half_space": HalfSpace,
	"slab": Slab,
	"ball": Ball,
	"ellipsoid": Ellipsoid,
}


def build_domain(name: str, params: Mapping[str, Any], patches: Optional[List[Mapping[str, Any]]] = None) -> DomainSpec:
	"""Instantiate a built-in domain or a polynomial graph-patch domain."""

	if name == "graph_patch":
		if not patches:
			raise ValueError("graph_patch domain needs one polynomial patch table")
		table = patches[0]
		patch = BoundaryPatch.from_polynomial(table["coefficients"], tuple(table["chart_box"]))
		return GraphPatchDomain(patch, **dict(params))
	try:
		factory = BUILTIN_DOMAINS[name]
	except KeyError as exc:
		raise ValueError(f"Unknown domain '{name}'") from exc
	return factory(**dict(params))


# Operations -------------------------------------------------------------------


def outward_normal(spec: DomainSpec, x: Sequence[float]) -> np.ndarray:
	"""Outward unit normal ∇ζ/|∇ζ| at a boundary point."""

	x = np.asarray(x, dtype=float)
	value = float(spec.zeta(x))
	if abs(value) >= BOUNDARY_TOL:
		raise NotOnBoundary(f"ζ(x) = {value:.3e} is not on the boundary")
	grad = spec.grad_zeta(x)
	norm = float(np.linalg.norm(grad))
	if norm < GRADIENT_TOL:
		raise DegenerateGradient(f"|∇ζ(x)| = {norm:.3e} at {x.tolist()}")
	return grad / norm


def reflect(v: np.ndarray, n: np.ndarray) -> np.ndarray:
	"""Specular reflection R_x v = v − 2n(n·v), vectorized over leading axes."""

	v = np.asarray(v, dtype=float)
	n = np.asarray(n, dtype=float)
	return v - 2.0 * n * np.sum(n * v, axis=-1, keepdims=True)


def normal_coordinates(spec: DomainSpec, p: PhasePoint) -> NormalCoordinates:
	"""(x_⊥, v_⊥, x ∈ Ω_bd) with respect to the closest boundary point x̂."""

	x_hat, distance = spec.closest_point(p.x[None, :])
	x_hat = x_hat[0]
	x_perp = float(distance[0])
	in_bd = x_perp < spec.delta0
	if in_bd and spec.patches and not any(bool(patch.contains(x_hat[None, :], tol=1e-7)[0]) for patch in spec.patches):
		raise ChartMiss(f"No chart of '{spec.name}' contains the closest point {x_hat.tolist()}")
	normal = spec.outward_normal_field(x_hat[None, :])[0]
	return NormalCoordinates(
		x_perp=x_perp,
		v_perp=float(np.dot(p.v, normal)),
		in_bd=bool(in_bd),
		x_hat=x_hat,
		normal=normal,
	)


def classify(spec: DomainSpec, p: PhasePoint) -> BoundaryClassification:
	"""Split Ω̄ × ℝ³ into interior, γ₊, γ₋ and the grazing band γ₀."""

	value = float(spec.zeta(p.x))
	if value > BOUNDARY_TOL:
		raise OutsideDomain(f"ζ(x) = {value:.3e} > 0")
	if value < -BOUNDARY_TOL:
		return BoundaryClassification(kind="interior", n=None, v_dot_n=0.0)
	normal = outward_normal(spec, p.x)
	speed = float(np.dot(p.v, normal))
	if abs(speed) <= GRAZING_TOL:
		kind = "grazing"
	elif speed > 0:
		kind = "outgoing"
	else:
		kind = "incoming"
	return BoundaryClassification(kind=kind, n=normal, v_dot_n=speed)


def has_rotational_symmetry(
	spec: DomainSpec,
	x0: Sequence[float],
	omega: Sequence[float],
	samples: int = 256,
	rng: Optional[np.random.Generator] = None,
	tol: float = 1e-12,
) -> Tuple[bool, float]:
	"""Check {(x − x0) × ω}·n_x = 0 on sampled boundary points."""

	rng = rng or np.random.default_rng(0)
	omega = np.asarray(omega, dtype=float)
	omega = omega / np.linalg.norm(omega)
	boundary = spec.sample_boundary(samples, rng)
	normals = spec.outward_normal_field(boundary)
	residual = float(np.max(np.abs(np.sum(np.cross(boundary - np.asarray(x0, dtype=float), omega) * normals, axis=-1))))
	return residual <= tol, residual
