"""Tests for the phase-space solver, its guards and its diagnostics."""

import math

import numpy as np
import pytest

from landau_lab.coefficients import sqrt_maxwellian
from landau_lab.geometry import Slab
from landau_lab.grid import KineticField, PhaseGrid, wall_layers
from landau_lab.regularization import BumpKernel, CutoffFamily
from landau_lab.solver import (
	WINDOW_ROOT,
	CompatibilityViolation,
	ContractionGuard,
	PhaseSolver,
	SolveResult,
	SolverSchedule,
	adjoint_solve,
	boundary_mismatch,
	boundary_residual,
	certified_window,
	check_window,
	compatibility_mask,
	conservation_moments,
	duality_certificate,
	duhamel_layer,
	limit_schedule,
	mild_lipschitz,
	mild_step,
	outgoing_trace_norms,
	plan_steps,
	positivity_margin,
	reflection_sweep,
	solve_fixed_point,
	trace_lp_bound,
	trace_sup_bound,
)


EPS = 0.3


def _grid(delta0: float = 0.5) -> PhaseGrid:
	return PhaseGrid.build(Slab(half_width=1.0, period=2.0, delta0=delta0), (4, 4, 4), nv=4, v_max=2.0)


def _schedule(**overrides) -> SolverSchedule:
	values = {"epsilon_list": (EPS,), "a_list": (0.3,), "n_max": 3, "T": 0.02, "dt": 0.01, "diffusion": "laplacian"}
	values.update(overrides)
	return SolverSchedule(**values)


def _solver(mode: str = "laplacian", **overrides) -> PhaseSolver:
	return PhaseSolver(_grid(), CutoffFamily(EPS), BumpKernel.build(8), _schedule(diffusion=mode, **overrides), 0.3)


def _nonnegative_datum(grid: PhaseGrid) -> np.ndarray:
	x = grid.x_mesh
	spatial = 0.5 * (1.0 + np.cos(math.pi * x[..., 0]))
	return 0.5 * spatial[:, :, :, None, None, None] * sqrt_maxwellian(grid.velocity.mesh)[None, None, None]


def _constant_result(grid: PhaseGrid, values: np.ndarray, times) -> SolveResult:
	fields = [KineticField(values, time=t) for t in times]
	traces = [wall_layers(values) for _ in times]
	return SolveResult(times=list(times), fields=fields, traces=traces, rows=[], dt=0.01)


def test_window_root_and_certified_window() -> None:
	assert math.exp(WINDOW_ROOT) + 2.0 * WINDOW_ROOT == pytest.approx(2.0)
	window = certified_window(0.2)
	assert 4.0 * window / 0.2**2 == pytest.approx(0.95 * WINDOW_ROOT)
	assert check_window(0.2, window) < 0.5


def test_check_window_raises_at_one_half() -> None:
	with pytest.raises(ContractionGuard, match="≥ 1/2"):
		check_window(0.2, 0.2**2 / 8.0)


def test_plan_steps_caps_only_with_diffusion() -> None:
	schedule = _schedule()
	capped = plan_steps(schedule, EPS, "laplacian")
	assert capped.capped
	assert capped.dt <= certified_window(EPS)
	assert capped.dt * capped.steps == pytest.approx(schedule.T)
	free = plan_steps(schedule, EPS, "off")
	assert not free.capped
	assert free.steps == 2


def test_schedule_validation() -> None:
	with pytest.raises(ValueError, match="decreasing"):
		SolverSchedule(epsilon_list=(0.1, 0.2))
	with pytest.raises(ValueError, match="lie in"):
		SolverSchedule(a_list=(1.0,))
	with pytest.raises(ValueError, match="unknown diffusion"):
		SolverSchedule(diffusion="implicit")
	assert SolverSchedule().delta_for(0.1) == pytest.approx(4e-4)
	assert SolverSchedule(compatibility_delta=0.01).delta_for(0.1) == 0.01


def test_solver_requires_coefficients_and_small_epsilon() -> None:
	grid = _grid()
	with pytest.raises(ValueError, match="needs collision coefficients"):
		PhaseSolver(grid, CutoffFamily(EPS), BumpKernel.build(8), _schedule(diffusion="cholesky"), 0.3)
	with pytest.raises(ValueError, match="below delta0"):
		PhaseSolver(_grid(delta0=0.25), CutoffFamily(EPS), BumpKernel.build(8), _schedule(), 0.3)


def test_ghosts_zero_incoming_without_datum() -> None:
	solver = _solver()
	values = np.ones(solver.grid.shape)
	lower, upper = solver.ghosts(values, None)
	v3 = solver.grid.velocity.mesh[..., 2]
	assert np.all(lower[..., v3 > 0] == 0.0)
	assert np.all(lower[..., v3 < 0] == 1.0)
	assert np.all(upper[..., v3 < 0] == 0.0)
	assert np.all(upper[..., v3 > 0] == 1.0)


def test_forward_solve_keeps_maximum_and_sign() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	result = solve_fixed_point(solver, f0)
	top = float(np.max(np.abs(f0)))
	assert max(item.sup() for item in result.fields) <= top * (1.0 + 1e-6)
	assert min(float(np.min(item.values)) for item in result.fields) >= -1e-8
	assert positivity_margin(solver.grid, result.fields) > 0.0
	assert result.times[-1] == pytest.approx(solver.schedule.T)
	assert len(result.traces) == solver.plan.steps + 1
	assert all(count >= 1 for count in result.picard_iterations)


def test_outgoing_trace_respects_sup_bound() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	result = solve_fixed_point(solver, f0)
	sup, l1 = outgoing_trace_norms(solver.grid, result, 1.0)
	assert sup <= trace_sup_bound(EPS, solver.schedule.T, float(np.max(np.abs(f0))))
	assert l1 >= 0.0


def test_mild_map_lipschitz_constant() -> None:
	solver = _solver()
	constant = mild_lipschitz(solver, pairs=4)
	assert 0.0 < constant <= 4.0 * solver.plan.dt / EPS**2 * (1.0 + 1e-12)
	assert mild_lipschitz(_solver(mode="off"), pairs=2) == 0.0


def test_mild_step_is_fixed_by_the_implicit_step() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	result = solve_fixed_point(solver, f0)
	start = KineticField(f0, time=0.0)
	image = mild_step(solver, start, result.fields[1], None, (0.0, solver.plan.dt))
	assert image.time == pytest.approx(solver.plan.dt)
	assert np.allclose(image.values, result.fields[1].values, rtol=0.0, atol=1e-8)


def test_mild_step_rejects_foreign_windows() -> None:
	solver = _solver(mode="off")
	start = KineticField(np.zeros(solver.grid.shape))
	with pytest.raises(ValueError, match="does not match the planned step"):
		mild_step(solver, start, start, None, (0.0, 2.0 * solver.plan.dt))


def test_duhamel_layer_without_collision_kernel() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	with pytest.raises(ValueError, match="needs collision coefficients"):
		duhamel_layer(solver, f0)
	result = duhamel_layer(solver, f0, kbar_scale=0.0)
	assert result.times[-1] == pytest.approx(solver.plan.dt * solver.plan.steps)
	assert max(item.sup() for item in result.fields) <= float(np.max(f0)) * (1.0 + 1e-6)
	assert min(float(np.min(item.values)) for item in result.fields) >= -1e-8


def test_duhamel_layer_without_kernel_matches_the_homogeneous_march() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	layer = duhamel_layer(solver, f0, kbar_scale=0.0, panels=1)
	marched = solver.march(f0, lambda k, current: solver.reflected(wall_layers(current)))

	assert np.array_equal(layer.final.values, marched.final.values)
	assert len(layer.traces) == len(marched.traces)
	assert all(np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) for a, b in zip(layer.traces, marched.traces))


def test_off_mode_skips_picard() -> None:
	solver = _solver(mode="off")
	values = np.ones(solver.grid.shape)
	assert np.all(solver.collision(values) == 0.0)
	base, count = solver.implicit(values)
	assert count == 0
	assert base is values


def test_previous_iterate_must_share_the_step_plan() -> None:
	solver = _solver()
	f0 = _nonnegative_datum(solver.grid)
	short = _constant_result(solver.grid, f0, [0.0])
	with pytest.raises(ValueError, match="different step plan"):
		solve_fixed_point(solver, f0, previous=short)


def test_reflection_sweep_reports_mismatches() -> None:
	solver = _solver()
	report = reflection_sweep(solver, _nonnegative_datum(solver.grid))
	assert 2 <= report.iterations <= solver.schedule.n_max
	assert len(report.mismatches) == report.iterations - 1
	assert all(value >= 0.0 for value in report.mismatches)
	assert report.boundary_residual >= 0.0


def test_boundary_mismatch_and_residual_vanish() -> None:
	grid = _grid()
	speed_sq = np.sum(grid.velocity.mesh**2, axis=-1)
	values = np.broadcast_to(np.exp(-speed_sq)[None, None, None], grid.shape).copy()
	result = _constant_result(grid, values, [0.0, 0.01])
	assert boundary_mismatch(grid, result, result) == 0.0
	assert boundary_residual(grid, result) == pytest.approx(0.0, abs=1e-14)


def test_adjoint_rejects_incompatible_terminal_data() -> None:
	solver = _solver(compatibility_delta=1.0)
	with pytest.raises(CompatibilityViolation, match="δ-neighborhood"):
		adjoint_solve(solver, np.ones(solver.grid.shape))
	with pytest.raises(ValueError, match="laplacian mode"):
		adjoint_solve(_solver(mode="off"), np.zeros(solver.grid.shape))


def test_adjoint_marches_backward_from_terminal_time() -> None:
	solver = _solver(compatibility_delta=1.0)
	mask = compatibility_mask(solver)
	assert np.any(mask) and not np.all(mask)
	psi_T = np.where(mask, 0.0, 1.0)
	result = adjoint_solve(solver, psi_T)
	assert result.times[0] == pytest.approx(solver.schedule.T)
	assert result.times[-1] == pytest.approx(0.0, abs=1e-12)
	assert max(item.sup() for item in result.fields) <= 1.0 + 1e-6


def test_compatibility_mask_respects_delta() -> None:
	solver = _solver()
	assert not np.any(compatibility_mask(solver, delta=0.0))
	assert np.all(compatibility_mask(solver, delta=100.0))


def test_duality_certificate_of_synthetic_pairings() -> None:
	grid = _grid()
	ones = np.ones(grid.shape)
	backward = _constant_result(grid, ones, [0.01, 0.0])
	assert duality_certificate(grid, _constant_result(grid, ones, [0.0, 0.01]), backward) == 0.0
	drifting = SolveResult(
		times=[0.0, 0.01],
		fields=[KineticField(ones, time=0.0), KineticField(2.0 * ones, time=0.01)],
		traces=[wall_layers(ones), wall_layers(2.0 * ones)],
		rows=[],
		dt=0.01,
	)
	assert duality_certificate(grid, drifting, backward) == pytest.approx(1.0)


def test_trace_bounds() -> None:
	assert trace_sup_bound(0.5, 0.0, 2.0) == 2.0
	assert trace_lp_bound(1.0, 1, 0.3, 0.5, 0.0, 3.0) == pytest.approx(3.0)
	# two reflections add (1−a)^p to the geometric sum
	assert trace_lp_bound(2.0, 2, 0.5, 0.5, 0.0, 1.0) == pytest.approx(math.sqrt(1.25))


def test_conservation_moments_of_zero_and_symmetric_fields() -> None:
	grid = _grid()
	zero = conservation_moments(grid, grid.zeros())
	assert all(value == 0.0 for value in zero.values())
	root = np.broadcast_to(sqrt_maxwellian(grid.velocity.mesh)[None, None, None], grid.shape)
	moments = conservation_moments(grid, root)
	assert moments["mass"] > 0.0
	assert moments["momentum_3"] == pytest.approx(0.0, abs=1e-14)
	assert "angular" not in moments


def test_limit_schedule_skips_epsilon_above_delta0() -> None:
	grid = _grid(delta0=0.3)
	f0 = _nonnegative_datum(grid)
	schedule = SolverSchedule(epsilon_list=(0.4, 0.2), a_list=(0.5, 0.1), n_max=2, T=0.02, dt=0.01, diffusion="off")
	rows = limit_schedule(grid, f0, BumpKernel.build(8), schedule)
	assert [(row["epsilon"], row["a"]) for row in rows] == [(0.2, 0.5), (0.2, 0.1)]
	assert all(row["iterations"] >= 1.0 for row in rows)
