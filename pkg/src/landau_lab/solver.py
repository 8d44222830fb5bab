"""Semi-Lagrangian solver for the regularized problem on the slab phase grid.

One time step traces the characteristics back (``trace_feet``), interpolates
the previous slice with ghost layers that carry the boundary datum, and then
solves F = base + Δt·Q[F] by Picard iteration. The Picard map is exactly the
mild-solution map restricted to one window, so its Lipschitz constant is
4Δt/ε² and the guard keeps the window certified.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from .characteristics import CharacteristicSystem, trace_feet
from .coefficients import (
	CollisionCoefficients,
	abar_apply,
	kbar_apply,
	sqrt_maxwellian,
	velocity_weight,
)
from .grid import KineticField, PhaseGrid, interpolate_phase, reflect_velocity_axes, wall_layers
from .regularization import BumpKernel, CutoffFamily, q_eps_grid, stencil_exits_box
from .utils import ordered_map, setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()

DiffusionMode = Literal["cholesky", "laplacian", "stencil", "off"]
DIFFUSION_MODES: Tuple[str, ...] = ("cholesky", "laplacian", "stencil", "off")

# Root of e^s + 2s = 2: the largest 4T₁/ε² with e^{(4/ε²)T₁} + 8T₁/ε² ≤ 2.
WINDOW_ROOT = optimize.brentq(lambda s: math.exp(s) + 2.0 * s - 2.0, 0.0, 1.0)


class ContractionGuard(ValueError):
	"""Raised when a fixed-point window violates 4T₁/ε² < 1/2."""


class NoConvergence(RuntimeError):
	"""Raised when Picard iteration stalls above tolerance."""


class CompatibilityViolation(ValueError):
	"""Raised when ψ_T is nonzero on {x_⊥² + |β_ε(v)|² < δ}."""


@dataclass(frozen=True)
class SolverSchedule:
	"""Limit schedule and stepping controls of the approximate problem."""

	epsilon_list: Tuple[float, ...] = (0.3, 0.2, 0.15, 0.1)
	a_list: Tuple[float, ...] = (0.3, 0.1, 0.03)
	n_max: int = 12
	T: float = 0.5
	dt: float = 0.01
	fixed_point_tol: float = 1e-9
	max_picard: int = 200
	duhamel_panels: int = 10
	duhamel_tol: float = 1e-9
	mismatch_tol: float = 1e-10
	output_every: int = 1
	diffusion: DiffusionMode = "cholesky"
	window_safety: float = 0.95
	compatibility_delta: Optional[float] = None
	norm_theta: float = 0.0

	def __post_init__(self) -> None:
		if not self.epsilon_list or any(not 0.0 < eps < 0.5 for eps in self.epsilon_list):
			raise ValueError("every epsilon must lie in (0, 1/2)")
		if not self.a_list or any(not 0.0 < a < 1.0 for a in self.a_list):
			raise ValueError("every a must lie in (0, 1)")
		if list(self.epsilon_list) != sorted(self.epsilon_list, reverse=True):
			raise ValueError("epsilon_list must be decreasing")
		if list(self.a_list) != sorted(self.a_list, reverse=True):
			raise ValueError("a_list must be decreasing")
		if self.n_max < 1 or self.T <= 0 or self.dt <= 0:
			raise ValueError("n_max, T and dt must be positive")
		if self.diffusion not in DIFFUSION_MODES:
			raise ValueError(f"unknown diffusion mode '{self.diffusion}'")
		if not 0.0 < self.window_safety < 1.0:
			raise ValueError("window_safety must lie in (0, 1)")

	def delta_for(self, epsilon: float) -> float:
		return self.compatibility_delta if self.compatibility_delta is not None else 4.0 * epsilon**4


def certified_window(epsilon: float, safety: float = 0.95) -> float:
	"""Largest window length T₁ meeting e^{(4/ε²)T₁} + 8T₁/ε² ≤ 2, scaled by ``safety``."""

	return safety * WINDOW_ROOT * epsilon**2 / 4.0


def check_window(epsilon: float, length: float) -> float:
	"""Return the contraction factor 4T₁/ε²; raise when it reaches 1/2."""

	factor = 4.0 * length / epsilon**2
	if factor >= 0.5:
		raise ContractionGuard(f"window {length:.4g} gives 4T₁/ε² = {factor:.4f} ≥ 1/2 at ε = {epsilon}")
	return factor


@dataclass(frozen=True)
class StepPlan:
	dt: float
	steps: int
	capped: bool


def plan_steps(schedule: SolverSchedule, epsilon: float, mode: str, horizon: Optional[float] = None) -> StepPlan:
	horizon = schedule.T if horizon is None else horizon
	requested = min(schedule.dt, horizon)
	capped = False
	if mode != "off":
		window = certified_window(epsilon, schedule.window_safety)
		if requested > window:
			LOGGER.info("Window guard caps Δt from %.4g to %.4g at ε=%.3f", requested, window, epsilon)
			requested = window
			capped = True
	steps = max(1, int(math.ceil(horizon / requested - 1e-12)))
	return StepPlan(dt=horizon / steps, steps=steps, capped=capped)


@dataclass
class SolveResult:
	"""Stored output slices, wall traces at every step and per-output rows."""

	times: List[float]
	fields: List[KineticField]
	traces: List[Tuple[np.ndarray, np.ndarray]]
	rows: List[Dict[str, float]]
	dt: float
	capped: bool = False
	picard_iterations: List[int] = field(default_factory=list)

	@property
	def final(self) -> KineticField:
		return self.fields[-1]


@dataclass
class SweepReport:
	result: SolveResult
	mismatches: List[float]
	iterations: int
	converged: bool
	monotone: bool
	boundary_residual: float


BoundaryDatum = Callable[[int, np.ndarray], Optional[Tuple[np.ndarray, np.ndarray]]]


class PhaseSolver:
	"""Propagator of the regularized problem for one (ε, a) on a phase grid."""

	def __init__(
		self,
		grid: PhaseGrid,
		fam: CutoffFamily,
		kernel: BumpKernel,
		schedule: SolverSchedule,
		a: float,
		coeffs: Optional[CollisionCoefficients] = None,
		mode: Optional[str] = None,
		horizon: Optional[float] = None,
	) -> None:
		self.grid = grid
		self.fam = fam
		self.kernel = kernel
		self.schedule = schedule
		self.a = float(a)
		self.mode = mode or schedule.diffusion
		if self.mode not in DIFFUSION_MODES:
			raise ValueError(f"unknown diffusion mode '{self.mode}'")
		if self.mode in ("cholesky", "stencil") and coeffs is None:
			raise ValueError(f"diffusion mode '{self.mode}' needs collision coefficients")
		self.coeffs = coeffs
		fam.check_domain(grid.domain)
		forcing = coeffs.forcing_at if self.mode == "cholesky" else None
		self.system = CharacteristicSystem(fam, grid.domain, forcing=forcing)
		self.plan = plan_steps(schedule, fam.epsilon, self.mode, horizon)
		if self.mode == "stencil":
			self.plan = self._stencil_plan(self.plan)
		if self.mode != "off":
			check_window(fam.epsilon, self.plan.dt)
		if self.mode != "off" and stencil_exits_box(kernel, fam.epsilon, grid.velocity.axis):
			LOGGER.warning("Velocity stencil of width %.3f leaves the box; the field is extended by zero", fam.epsilon * kernel.width)
		v3 = grid.velocity.mesh[..., 2]
		self._lower_in = v3 > 0.0
		self._upper_in = v3 < 0.0

	# Geometry of one step ---------------------------------------------------
	@cached_property
	def spatial_factor(self) -> np.ndarray:
		if self.coeffs is None:
			return np.zeros(self.grid.x_shape)
		return self.coeffs.spatial(self.grid.x_mesh)

	def _feet(self, backward: bool) -> Tuple[np.ndarray, np.ndarray]:
		grid = self.grid

		def one_slab(i: int) -> Tuple[np.ndarray, np.ndarray]:
			x = np.broadcast_to(grid.x_mesh[i][:, :, None, None, None, :], grid.shape[1:] + (3,))
			v = np.broadcast_to(grid.velocity.mesh[None, None], grid.shape[1:] + (3,))
			return trace_feet(self.system, x, v, self.plan.dt, backward=backward)

		pieces = ordered_map(one_slab, range(grid.nx[0]))
		feet_x = np.stack([p[0] for p in pieces])
		feet_v = np.stack([p[1] for p in pieces])
		return feet_x.reshape(-1, 3), feet_v.reshape(-1, 3)

	@cached_property
	def backward_feet(self) -> Tuple[np.ndarray, np.ndarray]:
		return self._feet(backward=True)

	@cached_property
	def forward_feet(self) -> Tuple[np.ndarray, np.ndarray]:
		return self._feet(backward=False)

	# Collision part ---------------------------------------------------------
	def collision(self, values: np.ndarray, adjoint: bool = False) -> np.ndarray:
		"""Q[F] for the configured diffusion mode (Q̄ when ``adjoint``)."""

		eps = self.fam.epsilon
		if self.mode == "off":
			return np.zeros_like(values)
		if self.mode == "laplacian":
			return q_eps_grid(values, self.kernel, eps, self.grid.h_v, adjoint=adjoint)
		if adjoint:
			raise ValueError(f"the adjoint problem runs in laplacian mode, not '{self.mode}'")
		if self.mode == "stencil":
			return abar_apply(self.coeffs, values, self.spatial_factor)
		return (2.0 / eps**2) * (self._cholesky_average(values) - values)

	@cached_property
	def cholesky_factors(self) -> np.ndarray:
		"""chol σ_G per x₁ index; the background depends on x through x₁ only."""

		coeffs = self.coeffs
		s = coeffs.spatial(self.grid.x_mesh[:, 0, 0])
		return np.stack([np.linalg.cholesky(coeffs.sigma_G(np.asarray(value))) for value in s])

	def _cholesky_average(self, values: np.ndarray) -> np.ndarray:
		"""Sequential one-dimensional bump averages along the columns of chol σ_G."""

		grid = self.grid
		axis = grid.velocity.axis
		mesh = grid.velocity.mesh
		eps = self.fam.epsilon
		nodes = self.kernel.nodes
		weights = self.kernel.weights

		def one_slab(i: int) -> np.ndarray:
			block = np.moveaxis(values[i].reshape((-1,) + grid.velocity.shape), 0, -1)
			factor = self.cholesky_factors[i]
			for k in range(3):
				column = factor[..., :, k]
				points = mesh[..., None, :] + eps * nodes[:, None] * column[..., None, :]
				interpolator = RegularGridInterpolator((axis, axis, axis), block, bounds_error=False, fill_value=0.0)
				sampled = interpolator(points.reshape(-1, 3)).reshape(points.shape[:-1] + (block.shape[-1],))
				block = np.einsum("abcqm,q->abcm", sampled, weights)
			return np.moveaxis(block, -1, 0).reshape(values.shape[1:])

		return np.stack(ordered_map(one_slab, range(grid.nx[0])))

	def _stencil_plan(self, plan: StepPlan) -> StepPlan:
		sigma_max = float(np.max(np.linalg.eigvalsh(self.coeffs.sigma_mu)))
		limit = 0.2 * self.grid.h_v**2 / (6.0 * max(sigma_max, 1e-12))
		if plan.dt <= limit:
			return plan
		steps = int(math.ceil(plan.dt * plan.steps / limit))
		LOGGER.info("Stencil mode caps Δt to %.4g for Picard contraction", plan.dt * plan.steps / steps)
		return StepPlan(dt=plan.dt * plan.steps / steps, steps=steps, capped=True)

	# One window -------------------------------------------------------------
	def ghosts(self, current: np.ndarray, datum: Optional[Tuple[np.ndarray, np.ndarray]], adjoint: bool = False) -> Tuple[np.ndarray, np.ndarray]:
		"""Ghost layers: the boundary datum on velocities entering the step, edge values elsewhere."""

		lower_edge, upper_edge = wall_layers(current)
		lower_mask, upper_mask = (self._upper_in, self._lower_in) if adjoint else (self._lower_in, self._upper_in)
		lower_datum, upper_datum = datum if datum is not None else (np.zeros_like(lower_edge), np.zeros_like(upper_edge))
		return np.where(lower_mask, lower_datum, lower_edge), np.where(upper_mask, upper_datum, upper_edge)

	def transport(self, values: np.ndarray, ghosts: Tuple[np.ndarray, np.ndarray], adjoint: bool = False) -> np.ndarray:
		feet_x, feet_v = self.forward_feet if adjoint else self.backward_feet
		base = interpolate_phase(self.grid, values, feet_x, feet_v, ghosts[0], ghosts[1])
		return base.reshape(self.grid.shape)

	def implicit(self, base: np.ndarray, adjoint: bool = False) -> Tuple[np.ndarray, int]:
		"""Solve F = base + Δt·Q[F] by Picard iteration."""

		if self.mode == "off":
			return base, 0
		dt = self.plan.dt
		tol = self.schedule.fixed_point_tol
		current = base
		for iteration in range(1, self.schedule.max_picard + 1):
			candidate = base + dt * self.collision(current, adjoint=adjoint)
			scale = max(float(np.max(np.abs(candidate))), 1e-300)
			residual = float(np.max(np.abs(candidate - current))) / scale
			LOGGER.debug("Picard iteration %d residual %.3e", iteration, residual)
			current = candidate
			if residual <= tol:
				return current, iteration
		raise NoConvergence(f"Picard residual {residual:.3e} above {tol:.1e} after {self.schedule.max_picard} iterations")

	def mild_map(self, start: np.ndarray, candidate: np.ndarray, ghosts: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
		"""T[F] on one window: transported start value plus Δt·Q at the window end."""

		return self.transport(start, ghosts) + self.plan.dt * self.collision(candidate)

	# Marching ---------------------------------------------------------------
	def march(
		self,
		initial: np.ndarray,
		datum: BoundaryDatum,
		adjoint: bool = False,
	) -> SolveResult:
		"""Run all steps; the adjoint marches backward from the terminal slice."""

		plan = self.plan
		grid = self.grid
		values = np.asarray(initial, dtype=float)
		horizon = plan.dt * plan.steps
		start_time = horizon if adjoint else 0.0
		direction = -1.0 if adjoint else 1.0
		times = [start_time]
		fields = [KineticField(values, time=start_time)]
		traces = [wall_layers(values)]
		iterations: List[int] = []
		for k in range(1, plan.steps + 1):
			ghost = self.ghosts(values, datum(k, values), adjoint=adjoint)
			values, count = self.implicit(self.transport(values, ghost, adjoint=adjoint), adjoint=adjoint)
			iterations.append(count)
			traces.append(wall_layers(values))
			if k % self.schedule.output_every == 0 or k == plan.steps:
				t = start_time + direction * k * plan.dt
				times.append(t)
				fields.append(KineticField(values, time=t))
		result = SolveResult(times=times, fields=fields, traces=traces, rows=[], dt=plan.dt, capped=plan.capped, picard_iterations=iterations)
		result.rows = summary_rows(grid, result, self.schedule.norm_theta, self.domain_axis())
		return result

	def domain_axis(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
		return self.grid.domain.symmetry_axis

	def reflected(self, layers: Tuple[np.ndarray, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
		scale = 1.0 - self.a
		return scale * reflect_velocity_axes(layers[0]), scale * reflect_velocity_axes(layers[1])


# Operations -------------------------------------------------------------------------


def mild_step(
	solver: PhaseSolver,
	start: KineticField,
	candidate: KineticField,
	previous_trace: Optional[Tuple[np.ndarray, np.ndarray]],
	window: Tuple[float, float],
) -> KineticField:
	"""One application of the mild map on [t_a, t_b].

	``previous_trace`` is the wall trace of the preceding reflection iterate at
	t_a (None for the first iterate, whose incoming datum is zero).
	"""

	length = window[1] - window[0]
	if solver.mode != "off":
		check_window(solver.fam.epsilon, length)
	if not math.isclose(length, solver.plan.dt, rel_tol=1e-12):
		raise ValueError(f"window length {length} does not match the planned step {solver.plan.dt}")
	datum = solver.reflected(previous_trace) if previous_trace is not None else None
	ghosts = solver.ghosts(start.values, datum)
	return KineticField(solver.mild_map(start.values, candidate.values, ghosts), time=window[1])


def mild_lipschitz(solver: PhaseSolver, pairs: int = 20, rng: Optional[np.random.Generator] = None) -> float:
	"""max ‖T[F₁] − T[F₂]‖_∞/‖F₁ − F₂‖_∞ over random field pairs."""

	rng = rng or np.random.default_rng(0)
	start = KineticField(rng.uniform(-1.0, 1.0, solver.grid.shape))
	window = (0.0, solver.plan.dt)
	worst = 0.0
	for _ in range(pairs):
		first = KineticField(rng.uniform(-1.0, 1.0, solver.grid.shape))
		second = KineticField(rng.uniform(-1.0, 1.0, solver.grid.shape))
		gap = mild_step(solver, start, first, None, window).values - mild_step(solver, start, second, None, window).values
		worst = max(worst, float(np.max(np.abs(gap))) / float(np.max(np.abs(first.values - second.values))))
	return worst


def solve_fixed_point(
	solver: PhaseSolver,
	f0: np.ndarray,
	previous: Optional[SolveResult] = None,
) -> SolveResult:
	"""Continue the per-window fixed point to T; iterate n ≥ 2 reads the outgoing trace of ``previous``."""

	if previous is None:
		datum: BoundaryDatum = lambda k, current: None
	else:
		if len(previous.traces) != solver.plan.steps + 1:
			raise ValueError("previous iterate was run on a different step plan")
		datum = lambda k, current: solver.reflected(previous.traces[k - 1])
	return solver.march(f0, datum)


def reflection_sweep(solver: PhaseSolver, f0: np.ndarray) -> SweepReport:
	"""Iterate γ₋fⁿ = (1−a)R[γ₊fⁿ⁻¹] for n = 1…n_max, stopping once the mismatch is below tolerance."""

	schedule = solver.schedule
	result = solve_fixed_point(solver, f0)
	mismatches: List[float] = []
	converged = False
	iterations = 1
	if schedule.n_max >= 2:
		for n in range(2, schedule.n_max + 1):
			following = solve_fixed_point(solver, f0, previous=result)
			gap = boundary_mismatch(solver.grid, following, result)
			mismatches.append(gap)
			LOGGER.info("Reflection iterate n=%d: boundary mismatch %.3e", n, gap)
			result = following
			iterations = n
			if gap < schedule.mismatch_tol:
				converged = True
				break
	monotone = all(later <= earlier * (1.0 + 1e-12) + 1e-300 for earlier, later in zip(mismatches, mismatches[1:]))
	if not monotone:
		LOGGER.warning("Reflection mismatch is not decreasing: %s", ", ".join(f"{m:.3e}" for m in mismatches))
	return SweepReport(
		result=result,
		mismatches=mismatches,
		iterations=iterations,
		converged=converged or (bool(mismatches) and mismatches[-1] < schedule.mismatch_tol),
		monotone=monotone,
		boundary_residual=boundary_residual(solver.grid, result),
	)


def duhamel_layer(
	solver: PhaseSolver,
	f0: np.ndarray,
	kbar_scale: float = 1.0,
	panels: Optional[int] = None,
) -> SolveResult:
	"""f̄(t) = U(t)f̄₀ + ∫U(t−s)K̄_g f̄(s)ds with the trapezoid rule on panels of U.

	Each panel solves f̄_m = U(Δ)(f̄_{m−1} + ½ΔK̄f̄_{m−1}) + ½ΔK̄f̄_m by Picard
	iteration. U runs the homogeneous problem with a lagged self-reflecting trace.
	"""

	coeffs = solver.coeffs
	if coeffs is None and kbar_scale:
		raise ValueError("the Duhamel layer needs collision coefficients")
	panels = panels or solver.schedule.duhamel_panels
	if solver.plan.steps % panels:
		LOGGER.warning("%d steps do not split into %d panels; using one panel per step", solver.plan.steps, panels)
		panels = solver.plan.steps
	steps_per_panel = solver.plan.steps // panels
	half = 0.5 * solver.plan.dt * steps_per_panel
	s = solver.spatial_factor

	def kbar(values: np.ndarray) -> np.ndarray:
		return kbar_scale * kbar_apply(coeffs, values, s, theta=0.0)

	values = np.asarray(f0, dtype=float)
	datum: BoundaryDatum = lambda k, current: solver.reflected(wall_layers(current))
	times = [0.0]
	fields = [KineticField(values, time=0.0)]
	traces = [wall_layers(values)]
	iterations: List[int] = []
	for m in range(1, panels + 1):
		start = values if not kbar_scale else values + half * kbar(values)
		propagated = _propagate(solver, start, datum, steps_per_panel, traces, iterations)
		if not kbar_scale:
			values = propagated
		else:
			values = _panel_picard(propagated, half, kbar, solver.schedule)
		times.append(m * 2.0 * half)
		fields.append(KineticField(values, time=m * 2.0 * half))
	result = SolveResult(times=times, fields=fields, traces=traces, rows=[], dt=solver.plan.dt, capped=solver.plan.capped, picard_iterations=iterations)
	result.rows = summary_rows(solver.grid, result, solver.schedule.norm_theta, solver.domain_axis())
	return result


def _propagate(
	solver: PhaseSolver,
	values: np.ndarray,
	datum: BoundaryDatum,
	steps: int,
	traces: List[Tuple[np.ndarray, np.ndarray]],
	iterations: List[int],
) -> np.ndarray:
	for k in range(1, steps + 1):
		ghost = solver.ghosts(values, datum(k, values))
		values, count = solver.implicit(solver.transport(values, ghost))
		iterations.append(count)
		traces.append(wall_layers(values))
	return values


def _panel_picard(propagated: np.ndarray, half: float, kbar: Callable[[np.ndarray], np.ndarray], schedule: SolverSchedule) -> np.ndarray:
	current = propagated
	for iteration in range(1, schedule.max_picard + 1):
		candidate = propagated + half * kbar(current)
		scale = max(float(np.max(np.abs(candidate))), 1e-300)
		residual = float(np.max(np.abs(candidate - current))) / scale
		current = candidate
		if residual <= schedule.duhamel_tol:
			LOGGER.debug("Duhamel panel converged in %d iterations", iteration)
			return current
	raise NoConvergence(f"Duhamel panel residual {residual:.3e} above {schedule.duhamel_tol:.1e}")


def compatibility_mask(solver: PhaseSolver, delta: Optional[float] = None) -> np.ndarray:
	"""Phase nodes with x_⊥² + |β_ε(v)|² < δ."""

	grid = solver.grid
	delta = solver.schedule.delta_for(solver.fam.epsilon) if delta is None else delta
	x_perp = grid.x_perp[:, :, :, None, None, None]
	in_bd = grid.in_bd[:, :, :, None, None, None]
	normal_sign = grid.domain.wall_sign(grid.x_mesh)[:, :, :, None, None, None]
	v3 = grid.velocity.mesh[..., 2][None, None, None]
	speed_sq = (grid.velocity.speed**2)[None, None, None]
	# |β_ε(v)|² = λ_ε(v_⊥)²|v|² inside the band
	scale = np.where(in_bd, solver.fam.lambda_(normal_sign * v3), 1.0)
	return x_perp**2 + scale**2 * speed_sq < delta


def adjoint_solve(solver: PhaseSolver, psi_T: np.ndarray) -> SolveResult:
	"""Integrate the adjoint problem backward from ψ_T with Q̄^ε and γ₊ψ = (1−a)R*[γ₋ψ]."""

	if solver.mode != "laplacian":
		raise ValueError("the adjoint problem is solved in laplacian mode")
	psi_T = np.asarray(psi_T, dtype=float)
	mask = compatibility_mask(solver)
	if np.any(np.abs(psi_T[mask]) > 0.0):
		raise CompatibilityViolation(f"ψ_T is nonzero at {int(np.sum(np.abs(psi_T[mask]) > 0.0))} node(s) of the δ-neighborhood")
	datum: BoundaryDatum = lambda k, current: solver.reflected(wall_layers(current))
	return solver.march(psi_T, datum, adjoint=True)


def duality_certificate(grid: PhaseGrid, forward: SolveResult, backward: SolveResult) -> float:
	"""max_t |∬F(t)ψ(t) − ∬f₀ψ(0)| / (‖f₀‖₂‖ψ_T‖₂) over the shared output times."""

	f0 = forward.fields[0].values
	psi_by_time = {round(t, 12): item.values for t, item in zip(backward.times, backward.fields)}
	psi_T = backward.fields[0].values
	scale = math.sqrt(float(np.sum(f0 * f0))) * math.sqrt(float(np.sum(psi_T * psi_T))) * grid.cell_volume
	if scale == 0.0:
		return 0.0
	reference = float(np.sum(f0 * psi_by_time[round(0.0, 12)])) * grid.cell_volume
	worst = 0.0
	for t, item in zip(forward.times, forward.fields):
		psi = psi_by_time.get(round(t, 12))
		if psi is None:
			continue
		pairing = float(np.sum(item.values * psi)) * grid.cell_volume
		worst = max(worst, abs(pairing - reference))
	return worst / scale


# Diagnostics ------------------------------------------------------------------------


def conservation_moments(grid: PhaseGrid, values: np.ndarray, axis: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Dict[str, float]:
	"""∬f√μ, ∬v f√μ, ∬|v|²f√μ and, with a symmetry axis, ∬((x−x0)×ω)·v f√μ."""

	v = grid.velocity.mesh
	root = sqrt_maxwellian(v)
	density = grid.integrate_x(values)
	moments = {
		"mass": float(np.sum(density * root) * grid.velocity.cell_volume),
		"energy": float(np.sum(density * root * np.sum(v * v, axis=-1)) * grid.velocity.cell_volume),
	}
	for k in range(3):
		moments[f"momentum_{k + 1}"] = float(np.sum(density * root * v[..., k]) * grid.velocity.cell_volume)
	if axis is not None:
		x0, omega = axis
		lever = np.cross(grid.x_mesh - x0, omega)
		weighted = np.einsum("abck,abcdefk->abcdef", lever, np.broadcast_to(v, values.shape + (3,)))
		moments["angular"] = float(np.sum(weighted * values * root) * grid.cell_volume)
	return moments


def outgoing_trace_norms(grid: PhaseGrid, result: SolveResult, p: float = 1.0) -> Tuple[float, float]:
	"""(sup, L^p) of the outgoing trace |v·n| dγ dt over the stored steps."""

	v3 = grid.velocity.mesh[..., 2]
	upper_out = v3 > 0.0
	lower_out = v3 < 0.0
	measure = np.abs(v3) * result.dt * grid.wall_area_element * grid.velocity.cell_volume
	sup = 0.0
	total = 0.0
	for lower, upper in result.traces[1:]:
		out_lower = np.where(lower_out, np.abs(lower), 0.0)
		out_upper = np.where(upper_out, np.abs(upper), 0.0)
		sup = max(sup, float(np.max(out_lower)), float(np.max(out_upper)))
		total += float(np.sum((out_lower**p + out_upper**p) * measure))
	return sup, total ** (1.0 / p)


def trace_sup_bound(epsilon: float, T: float, f0_sup: float) -> float:
	return math.exp(4.0 * T / epsilon**2) * f0_sup


def trace_lp_bound(p: float, n: int, a: float, epsilon: float, T: float, f0_norm: float) -> float:
	"""e^{4T/ε²}‖f₀‖_p·((1 − (1−a)^{pn})/(1 − (1−a)^p))^{1/p}."""

	ratio = (1.0 - (1.0 - a) ** (p * n)) / (1.0 - (1.0 - a) ** p)
	return math.exp(4.0 * T / epsilon**2) * f0_norm * ratio ** (1.0 / p)


def boundary_mismatch(grid: PhaseGrid, current: SolveResult, previous: SolveResult) -> float:
	"""∫|γ₊(fⁿ − fⁿ⁻¹)| over the outgoing half of both walls and all steps."""

	v3 = grid.velocity.mesh[..., 2]
	measure = np.abs(v3) * current.dt * grid.wall_area_element * grid.velocity.cell_volume
	total = 0.0
	for (lo_n, up_n), (lo_p, up_p) in zip(current.traces[1:], previous.traces[1:]):
		total += float(np.sum(np.where(v3 < 0.0, np.abs(lo_n - lo_p), 0.0) * measure))
		total += float(np.sum(np.where(v3 > 0.0, np.abs(up_n - up_p), 0.0) * measure))
	return total


def boundary_residual(grid: PhaseGrid, result: SolveResult) -> float:
	"""∫|γ₋f − R[γ₊f]| with the wall cell layers as traces."""

	v3 = grid.velocity.mesh[..., 2]
	measure = np.abs(v3) * result.dt * grid.wall_area_element * grid.velocity.cell_volume
	total = 0.0
	for lower, upper in result.traces[1:]:
		total += float(np.sum(np.where(v3 > 0.0, np.abs(lower - reflect_velocity_axes(lower)), 0.0) * measure))
		total += float(np.sum(np.where(v3 < 0.0, np.abs(upper - reflect_velocity_axes(upper)), 0.0) * measure))
	return total


def positivity_margin(grid: PhaseGrid, fields: Sequence[KineticField]) -> float:
	"""min over the run of μ + √μ f."""

	root = sqrt_maxwellian(grid.velocity.mesh)
	mu = root * root
	return min(float(np.min(mu + root * item.values)) for item in fields)


def summary_rows(
	grid: PhaseGrid,
	result: SolveResult,
	theta: float = 0.0,
	axis: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> List[Dict[str, float]]:
	"""Per-output rows: t, sup, L¹, weighted L², conservation drifts."""

	weight = velocity_weight(grid.velocity.mesh, theta) if theta else 1.0
	initial = conservation_moments(grid, result.fields[0].values, axis)
	rows = []
	for t, item in zip(result.times, result.fields):
		moments = conservation_moments(grid, item.values, axis)
		row = {
			"t": float(t),
			"sup": item.sup(),
			"l1": item.l1(grid),
			"l2_theta": math.sqrt(float(np.sum((item.values * weight) ** 2)) * grid.cell_volume),
		}
		for name, value in moments.items():
			row[f"{name}_drift"] = abs(value - initial[name])
		rows.append(row)
	return rows


def limit_schedule(
	grid: PhaseGrid,
	f0: np.ndarray,
	kernel: BumpKernel,
	schedule: SolverSchedule,
	coeffs: Optional[CollisionCoefficients] = None,
) -> List[Dict[str, float]]:
	"""Reflection sweeps over every (ε, a) of the schedule; reported, not asserted."""

	rows = []
	for epsilon in schedule.epsilon_list:
		if epsilon >= grid.domain.delta0:
			LOGGER.info("Skipping ε=%.3f: not below delta0=%.3f", epsilon, grid.domain.delta0)
			continue
		for a in schedule.a_list:
			solver = PhaseSolver(grid, CutoffFamily(epsilon), kernel, schedule, a, coeffs=coeffs)
			report = reflection_sweep(solver, f0)
			rows.append(
				{
					"epsilon": epsilon,
					"a": a,
					"iterations": float(report.iterations),
					"mismatch": report.mismatches[-1] if report.mismatches else 0.0,
					"boundary_residual": report.boundary_residual,
				}
			)
	return rows
