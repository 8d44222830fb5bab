"""Tests for the macro-micro split, the Poisson problems and the control monitors."""

import math

import numpy as np
import pytest
import sympy as sp

from landau_lab.coefficients import BackgroundField, CollisionCoefficients, collision_invariants, sqrt_maxwellian
from landau_lab.geometry import Slab
from landau_lab.grid import PhaseGrid, VelocityGrid
from landau_lab.macro_micro import (
	V_SYMBOLS,
	MacroFields,
	SolvabilityViolation,
	build_test_functions,
	burnett,
	coercivity_spotcheck,
	decay_monitor,
	gaussian_moment,
	gram_matrix,
	macro_control_report,
	odd_velocity_moments,
	poisson_solve,
	project_P,
	specular_cancellation,
	symbolic_gram,
	time_derivative,
	x_gradient,
)


@pytest.fixture(scope="module")
def coeffs() -> CollisionCoefficients:
	return CollisionCoefficients.build(VelocityGrid(10, 5.0), BackgroundField(amplitude=0.1))


def _x_grid(nx=(8, 4, 6), nv: int = 4, v_max: float = 2.0) -> PhaseGrid:
	return PhaseGrid.build(Slab(half_width=1.0, period=2.0, delta0=0.5), nx, nv=nv, v_max=v_max)


def test_gaussian_moments() -> None:
	v1, v2, v3 = V_SYMBOLS
	assert gaussian_moment(v1**4) == 3
	assert gaussian_moment(v1**2 * v2**2 * v3**2) == 1
	assert gaussian_moment(v1**3 * v2) == 0
	assert gaussian_moment(sp.Integer(7)) == 7


def test_symbolic_gram_is_orthonormal() -> None:
	gram = symbolic_gram()
	assert gram["chi"] == sp.eye(5)
	assert gram["A"] == sp.eye(3)
	assert gram["A_chi"] == sp.zeros(3, 5)


def test_discrete_gram_matches_identity() -> None:
	assert np.allclose(gram_matrix(VelocityGrid(24, 6.0)), np.eye(5), atol=1e-6)


def test_burnett_functions() -> None:
	v = VelocityGrid(8, 4.0).mesh
	trace = sum(burnett("B", (k, k), v) for k in range(3))
	assert np.allclose(trace, 0.0, atol=1e-12)
	assert np.allclose(burnett("B", (0, 1), v), burnett("B", (1, 0), v))
	point = np.array([1.0, 0.0, 0.0])
	assert burnett("A", (0,), point) == pytest.approx(-4.0 / math.sqrt(10.0) * float(sqrt_maxwellian(point)))
	with pytest.raises(ValueError, match="invalid Burnett index"):
		burnett("A", (3,), v)
	with pytest.raises(ValueError, match="invalid Burnett index"):
		burnett("C", (0,), v)


def test_project_P_recovers_macro_coefficients() -> None:
	velocity = VelocityGrid(24, 6.0)
	chi = collision_invariants(velocity.mesh)
	micro = burnett("B", (0, 1), velocity.mesh)
	f = 2.0 * chi[..., 0] - 0.5 * chi[..., 2] + 0.25 * chi[..., 4] + micro
	macro = project_P(velocity, f)
	assert float(macro.a) == pytest.approx(2.0, abs=1e-6)
	assert np.allclose(macro.b, [0.0, -0.5, 0.0], atol=1e-6)
	assert float(macro.c) == pytest.approx(0.25, abs=1e-6)
	assert np.allclose(macro.d, micro, atol=1e-6)
	assert np.allclose(macro.reconstruct(velocity), f)
	again = project_P(velocity, macro.macro_part(velocity))
	assert np.allclose(again.d, 0.0, atol=1e-6)


def test_odd_moments_of_even_field_vanish() -> None:
	velocity = VelocityGrid(8, 4.0)
	assert odd_velocity_moments(velocity, sqrt_maxwellian(velocity.mesh)) == pytest.approx(0.0, abs=1e-12)
	assert odd_velocity_moments(velocity, velocity.mesh[..., 0] * sqrt_maxwellian(velocity.mesh)) > 0.0


def test_poisson_rejects_bad_input() -> None:
	grid = _x_grid()
	with pytest.raises(ValueError, match="unknown boundary condition"):
		poisson_solve(grid, np.zeros(grid.x_shape), "dirichlet")
	with pytest.raises(SolvabilityViolation, match="Neumann compatibility"):
		poisson_solve(grid, np.ones(grid.x_shape), "neumann_zero")
	with pytest.raises(ValueError, match="vector right-hand side"):
		poisson_solve(grid, np.zeros(grid.x_shape), "tangential")
	with pytest.raises(ValueError, match="on the x-grid"):
		poisson_solve(grid, np.zeros(grid.x_shape + (3,)), "mean_zero")


def test_poisson_neumann_mode_residual_and_gauge() -> None:
	grid = _x_grid()
	rhs = np.cos(math.pi * grid.x_mesh[..., 0])
	solution = poisson_solve(grid, rhs, "neumann_zero")
	assert solution.residual < 1e-10
	assert float(np.mean(solution.potential)) == pytest.approx(0.0, abs=1e-12)
	assert solution.h1 > 0.0
	shifted = poisson_solve(grid, rhs + 3.0, "mean_zero")
	assert np.allclose(shifted.potential, solution.potential, atol=1e-10)


def test_poisson_tangential_components() -> None:
	grid = _x_grid()
	rhs = np.zeros(grid.x_shape + (3,))
	rhs[..., 0] = np.cos(math.pi * grid.x_mesh[..., 1])
	rhs[..., 2] = 1.0
	solution = poisson_solve(grid, rhs, "tangential")
	assert solution.potential.shape == grid.x_shape + (3,)
	assert solution.residual < 1e-10
	assert np.allclose(solution.potential[..., 1], 0.0, atol=1e-12)


def test_test_functions_follow_their_potentials() -> None:
	grid = _x_grid()
	macro = MacroFields(
		a=np.cos(math.pi * grid.x_mesh[..., 0]),
		b=np.zeros(grid.x_shape + (3,)),
		c=np.zeros(grid.x_shape),
		d=np.zeros(grid.shape),
	)
	functions = build_test_functions(grid, macro)

	assert functions.psi_a.shape == grid.shape
	assert functions.phi_a.residual < 1e-10
	assert np.max(np.abs(functions.psi_a)) > 0.0
	assert np.allclose(functions.psi_b, 0.0)
	assert np.allclose(functions.psi_c, 0.0)
	assert np.allclose(functions.total, functions.psi_a)


def test_x_gradient_is_exact_for_linear_profiles() -> None:
	grid = _x_grid()
	gradient = x_gradient(grid, 2.0 * grid.x_mesh[..., 2])
	assert np.allclose(gradient[..., 2], 2.0)
	assert np.allclose(gradient[..., :2], 0.0)


def test_time_derivative_is_exact_for_quadratics() -> None:
	times = np.array([0.0, 0.1, 0.3, 0.6])
	assert np.allclose(time_derivative(times, times**2), 2.0 * times)


def test_coercivity_skips_fields_without_micro_part(coeffs: CollisionCoefficients) -> None:
	report = coercivity_spotcheck(coeffs, samples=3, extra=[np.zeros(coeffs.velocity.shape)])
	assert len(report.quotients) == 3
	assert report.delta == min(report.quotients)
	assert math.isfinite(report.null_space_residual)


def test_decay_monitor_on_decaying_series(coeffs: CollisionCoefficients) -> None:
	grid = _x_grid(nx=(2, 2, 2), nv=10, v_max=5.0)
	v = grid.velocity.mesh
	profile = (1.0 + v[..., 0] * v[..., 1]) * sqrt_maxwellian(v)
	times = np.linspace(0.0, 1.0, 6)
	fields = [math.exp(-t) * np.broadcast_to(profile, grid.shape) for t in times]
	report = decay_monitor(coeffs, grid, times, fields)
	assert report.monotone
	assert report.max_increase < 0.0
	assert report.energy_constant >= 1.0
	assert report.decay_exponent is not None and report.decay_exponent < 0.0


def test_macro_control_report_holds_with_fitted_constant(coeffs: CollisionCoefficients) -> None:
	grid = _x_grid(nx=(4, 2, 4), nv=10, v_max=5.0)
	v = grid.velocity.mesh
	root = sqrt_maxwellian(v)
	spatial = np.cos(math.pi * grid.x_mesh[..., 0])
	profile = root + v[..., 0] * v[..., 1] * root
	times = np.array([0.0, 0.05, 0.1])
	fields = [math.exp(-t) * spatial[:, :, :, None, None, None] * profile[None, None, None] for t in times]
	report = macro_control_report(coeffs, grid, times, fields)
	assert report.passed
	assert report.lhs[0] == 0.0
	assert report.constant >= 0.0
	assert len(report.eta) == 3
	assert set(report.potential_ratios) == {"phi_a", "phi_b", "phi_c"}


def test_macro_control_report_with_a_fixed_constant(coeffs: CollisionCoefficients) -> None:
	grid = _x_grid(nx=(4, 2, 4), nv=10, v_max=5.0)
	v = grid.velocity.mesh
	root = sqrt_maxwellian(v)
	spatial = np.cos(math.pi * grid.x_mesh[..., 0])
	profile = root + v[..., 0] * v[..., 1] * root
	field = spatial[:, :, :, None, None, None] * profile[None, None, None]
	times = np.array([0.0, 0.05, 0.1])
	report = macro_control_report(coeffs, grid, times, [field] * 3, constant=0.0)

	assert report.constant == 0.0
	assert report.fitted > 0.0
	assert report.margin == pytest.approx(-report.lhs[-1])
	assert report.margin < 0.0
	assert not report.passed
	refitted = macro_control_report(coeffs, grid, times, [field] * 3)
	assert refitted.constant == refitted.fitted == pytest.approx(report.fitted)
	assert refitted.passed


def test_specular_cancellation_on_arbitrary_traces() -> None:
	grid = _x_grid()
	rng = np.random.default_rng(3)
	potential = rng.normal(size=grid.x_shape)
	layer_shape = grid.x_shape[:2] + grid.velocity.shape
	layers = (rng.normal(size=layer_shape), rng.normal(size=layer_shape))
	assert specular_cancellation(grid, potential, layers) <= 1e-10
