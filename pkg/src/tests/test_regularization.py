"""Tests for the cutoffs, the bump kernel and the Q^ε operators."""

import numpy as np
import pytest

from landau_lab.geometry import Ball, HalfSpace, PhasePoint, Slab
from landau_lab.regularization import (
	BumpKernel,
	CutoffFamily,
	OutOfRange,
	VelocitySlice,
	beta_eps,
	cutoff_defect_sweep,
	eta_eps,
	lambda_eps,
	q_eps,
	q_eps_adjoint,
	q_eps_grid,
	regularized_drift,
)


@pytest.fixture(scope="module")
def kernel() -> BumpKernel:
	return BumpKernel.build(16)


def _square(points: np.ndarray) -> np.ndarray:
	return np.sum(points * points, axis=-1)


def test_lambda_flat_zones_and_evenness() -> None:
	fam = CutoffFamily(0.3)
	assert lambda_eps(fam, 0.0) == 0.0
	assert lambda_eps(fam, 1.0) == 1.0
	s = 1.5 * 0.3**4
	middle = lambda_eps(fam, s)
	assert 0.0 < middle < 1.0
	assert middle == lambda_eps(fam, -s)
	grid = np.linspace(-3 * fam.flat_zone, 3 * fam.flat_zone, 401)
	values = fam.lambda_(grid)
	assert np.all((values >= 0.0) & (values <= 1.0))
	assert np.all(np.diff(values[grid >= 0]) >= 0.0)


def test_family_rejects_bad_epsilon() -> None:
	with pytest.raises(ValueError):
		CutoffFamily(0.5)
	with pytest.raises(ValueError, match="delta0"):
		CutoffFamily(0.4).check_domain(Ball(delta0=0.3))


def test_beta_and_eta_examples() -> None:
	fam = CutoffFamily(0.3)
	space = HalfSpace(delta0=1.0)
	interior = PhasePoint.of((0.0, 0.0, -2.0), (3.0, 0.0, 1.0))
	assert np.array_equal(beta_eps(fam, space, interior), [3.0, 0.0, 1.0])
	assert np.array_equal(beta_eps(fam, space, PhasePoint.of((0, 0, -0.1), (1, 2, 0))), [0.0, 0.0, 0.0])
	fast = PhasePoint.of((0.0, 0.0, -0.1), (1.0, 2.0, 3 * 0.3**4))
	assert np.allclose(beta_eps(fam, space, fast), fast.v)

	assert eta_eps(fam, space, (0.0, 0.0, -0.15)) == 0.0
	assert eta_eps(fam, space, (0.0, 0.0, -0.6)) == 1.0
	assert eta_eps(fam, space, (0.0, 0.0, -2.0)) == 1.0


def test_regularized_drift_examples() -> None:
	fam = CutoffFamily(0.3)
	space = HalfSpace(delta0=1.0)
	inside = PhasePoint.of((0.0, 0.0, -2.0), (1.0, -1.0, 0.5))
	assert np.array_equal(regularized_drift(fam, space, inside), inside.v)
	grazing = PhasePoint.of((0.0, 0.0, 0.0), (1.0, 1.0, 0.0))
	assert np.array_equal(regularized_drift(fam, space, grazing), [0.0, 0.0, 0.0])
	leaving = PhasePoint.of((0.0, 0.0, 0.0), (1.0, 1.0, 2 * 0.3**4))
	assert np.allclose(regularized_drift(fam, space, leaving), leaving.v)

	rng = np.random.default_rng(3)
	for _ in range(50):
		p = PhasePoint.of((0.0, 0.0, -rng.uniform(0.0, 1.5)), rng.normal(size=3) * 1e-3)
		assert np.linalg.norm(regularized_drift(fam, space, p)) <= np.linalg.norm(p.v) + 1e-15


def test_drift_vanishes_on_grazing_neighborhood() -> None:
	fam = CutoffFamily(0.2)
	assert cutoff_defect_sweep(fam, Slab(), samples=500) == 0.0
	assert cutoff_defect_sweep(fam, Ball(delta0=0.3), samples=500) <= 1e-10


def test_bump_moments(kernel: BumpKernel) -> None:
	mass, first, second = kernel.moments()
	assert mass == pytest.approx(1.0, abs=1e-10)
	assert abs(first) <= 1e-10
	assert second == pytest.approx(1.0, abs=1e-10)
	assert np.all(kernel.weights >= 0.0)
	with pytest.raises(ValueError):
		BumpKernel.build(1)


def test_q_eps_on_polynomials(kernel: BumpKernel) -> None:
	rng = np.random.default_rng(11)
	v = rng.uniform(-3.0, 3.0, size=(8, 3))
	for epsilon in (0.05, 0.2, 0.45):
		fam = CutoffFamily(epsilon)
		assert np.allclose(q_eps(fam, kernel, _square, v), 6.0, atol=1e-9)
		assert np.allclose(q_eps_adjoint(fam, kernel, _square, v), 6.0, atol=1e-9)
		assert np.allclose(q_eps(fam, kernel, lambda p: np.full(p.shape[:-1], 2.5), v), 0.0, atol=1e-12)
		assert np.allclose(q_eps(fam, kernel, lambda p: p[..., 0], v), 0.0, atol=1e-9)
		mixed = lambda p: p[..., 0] ** 2 - 2.0 * p[..., 2] ** 2 + p[..., 0] * p[..., 1]  # noqa: E731
		assert np.allclose(q_eps(fam, kernel, mixed, v), -2.0, atol=1e-9)


def test_q_eps_out_of_range(kernel: BumpKernel) -> None:
	axis = np.linspace(-1.75, 1.75, 8)
	field = VelocitySlice(axis, np.ones((8, 8, 8)))
	edge = np.array([[1.9, 0.0, 0.0]])
	with pytest.raises(OutOfRange):
		q_eps(CutoffFamily(0.3), kernel, field, edge, extend=False)
	assert np.isfinite(q_eps(CutoffFamily(0.3), kernel, field, edge)).all()


def test_grid_duality_on_periodic_box(kernel: BumpKernel) -> None:
	rng = np.random.default_rng(5)
	f = rng.normal(size=(12, 12, 12))
	psi = rng.normal(size=(12, 12, 12))
	forward = q_eps_grid(f, kernel, 0.3, 0.25, periodic=True)
	backward = q_eps_grid(psi, kernel, 0.3, 0.25, adjoint=True, periodic=True)
	scale = np.sum(np.abs(forward * psi))
	assert abs(np.sum(forward * psi) - np.sum(f * backward)) <= 1e-10 * scale


def test_adjoint_mean_zero_and_sup_bound(kernel: BumpKernel) -> None:
	axis = (np.arange(32) - 15.5) * 0.5
	v1, v2, v3 = np.meshgrid(axis, axis, axis, indexing="ij")
	r2 = (v1**2 + v2**2 + v3**2) / 9.0
	psi = np.where(r2 < 1.0, (1.0 - r2) ** 2, 0.0)
	epsilon = 0.3
	adjoint = q_eps_grid(psi, kernel, epsilon, 0.5, adjoint=True)
	assert abs(np.sum(adjoint)) <= 1e-10 * np.sum(np.abs(psi))
	forward = q_eps_grid(psi, kernel, epsilon, 0.5)
	assert np.max(np.abs(forward)) <= 4.0 / epsilon**2 * np.max(np.abs(psi))
