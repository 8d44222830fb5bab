"""Tests for the Landau kernel, σ_G, a_g, K̄_g, Γ and the norm suite."""

import math

import numpy as np
import pytest

from landau_lab.coefficients import (
	BackgroundField,
	CollisionCoefficients,
	Maxwellian,
	SingularPoint,
	a_g_of,
	abar_apply,
	collision_invariant_residual,
	drift_scaling_ratio,
	eigenvalue_slopes,
	ellipticity_constants,
	gamma_bilinear,
	kbar_apply,
	kbar_bound,
	linearized_operator,
	linearized_operator_direct,
	maxwellian,
	norms,
	phi_kernel,
	sigma_mu,
	sigma_of,
	spherical_convolution,
	velocity_weight,
	weight_derivatives,
)
from landau_lab.grid import VelocityGrid

SIGMA_AT_ORIGIN = (2.0 / 3.0) * math.sqrt(2.0 / math.pi)


@pytest.fixture(scope="module")
def coeffs() -> CollisionCoefficients:
	return CollisionCoefficients.build(VelocityGrid(10, 5.0), BackgroundField(amplitude=0.1))


def _gaussian_polynomial(mesh: np.ndarray) -> np.ndarray:
	return (1.0 + mesh[..., 0] - 0.5 * mesh[..., 1] * mesh[..., 2]) * np.exp(-0.5 * np.sum(mesh * mesh, axis=-1))


def test_phi_kernel_examples() -> None:
	assert np.allclose(phi_kernel(np.array([1.0, 0.0, 0.0])), np.diag([0.0, 1.0, 1.0]))
	assert np.allclose(phi_kernel(np.array([0.0, 2.0, 0.0])), np.diag([0.5, 0.0, 0.5]))
	rng = np.random.default_rng(0)
	for z in rng.normal(size=(20, 3)):
		kernel = phi_kernel(z)
		assert np.max(np.abs(kernel @ z)) <= 1e-14
		assert np.allclose(kernel, kernel.T)
		assert np.linalg.matrix_rank(kernel) == 2
	with pytest.raises(SingularPoint):
		phi_kernel(np.zeros(3))


def test_sigma_mu_at_origin_and_symmetry() -> None:
	assert np.allclose(sigma_mu(np.zeros(3)), SIGMA_AT_ORIGIN * np.eye(3), rtol=1e-8)
	rng = np.random.default_rng(1)
	sigma = sigma_mu(rng.normal(scale=3.0, size=(50, 3)))
	assert np.max(np.abs(sigma - np.swapaxes(sigma, -1, -2))) <= 1e-12
	assert np.all(np.linalg.eigvalsh(sigma)[:, 0] > 0.0)


def test_closed_form_matches_singular_quadrature() -> None:
	v = np.array([[0.7, 0.2, -0.4], [0.0, 0.0, 0.0]])
	quadrature = spherical_convolution(maxwellian, v)
	assert np.allclose(quadrature, sigma_mu(v), rtol=1e-6, atol=1e-9)


def test_sigma_of_zero_background_is_sigma_mu() -> None:
	v = np.array([1.0, -2.0, 0.5])
	assert np.array_equal(sigma_of(None, np.zeros(3), v), sigma_mu(v))
	assert np.array_equal(a_g_of(BackgroundField(), np.zeros(3), v), np.zeros(3))
	assert np.array_equal(a_g_of(None, np.zeros(3), np.zeros(3), theta=1.0), np.zeros(3))


def test_eigenvalue_slopes_at_large_speed() -> None:
	smallest, largest = eigenvalue_slopes(np.linspace(5.0, 20.0, 40))
	assert smallest == pytest.approx(-3.0, abs=0.3)
	assert largest == pytest.approx(-1.0, abs=0.3)


def test_ellipticity_constants_are_positive(coeffs: CollisionCoefficients) -> None:
	c1, c2 = ellipticity_constants(coeffs)
	assert 0.0 < c1 <= c2


def test_maxwellian_truncation() -> None:
	assert Maxwellian.truncation_deficit(8.0) < 1e-13
	velocity = VelocityGrid(24, 8.0)
	assert velocity.integrate(Maxwellian()(velocity.mesh)) == pytest.approx(1.0, abs=1e-6)


def test_weight_derivatives_vanish_at_origin() -> None:
	log_grad, hessian = weight_derivatives(np.zeros((1, 3)), 1.0)
	assert np.array_equal(log_grad, np.zeros((1, 3)))
	assert np.array_equal(hessian, np.zeros((1, 3, 3)))
	v = np.array([[3.0, 0.0, 4.0]])
	log_grad, _ = weight_derivatives(v, 2.0)
	assert np.allclose(log_grad, 2.0 / 6.0 * v / 5.0)


def test_a_g_vanishes_without_background(coeffs: CollisionCoefficients) -> None:
	assert np.array_equal(coeffs.a_g(0.0, theta=0.0), np.zeros(coeffs.velocity.shape + (3,)))
	mesh = coeffs.velocity.mesh
	assert np.allclose(coeffs.forcing(0.0), -np.einsum("...ij,...j->...i", coeffs.sigma_mu, mesh))


def test_kbar_and_gamma_are_linear(coeffs: CollisionCoefficients) -> None:
	zero = np.zeros(coeffs.velocity.shape)
	f = _gaussian_polynomial(coeffs.velocity.mesh)
	assert np.array_equal(kbar_apply(coeffs, zero, 0.3, theta=0.0), zero)
	assert np.array_equal(gamma_bilinear(coeffs, zero, 0.3), zero)
	assert np.allclose(gamma_bilinear(coeffs, f, 0.0), 0.0)

	scaled = gamma_bilinear(coeffs, 2.0 * f, 0.3)
	assert np.allclose(scaled, 2.0 * 3.0 * gamma_bilinear(coeffs, f, 0.1), rtol=1e-10, atol=1e-14)


def test_gamma_is_the_background_part_of_the_operator(coeffs: CollisionCoefficients) -> None:
	f = _gaussian_polynomial(coeffs.velocity.mesh)
	s = 0.2
	full = abar_apply(coeffs, f, s) + kbar_apply(coeffs, f, s, theta=0.0)
	base = abar_apply(coeffs, f, 0.0) + kbar_apply(coeffs, f, 0.0, theta=0.0)
	gamma = gamma_bilinear(coeffs, f, s)
	assert np.max(np.abs(full - base - gamma)) <= 1e-10 * max(np.max(np.abs(gamma)), 1e-300)


def test_linearized_operator_assemblies_converge() -> None:
	errors = []
	for n in (16, 32):
		coeffs = CollisionCoefficients.build(VelocityGrid(n, 6.0))
		f = _gaussian_polynomial(coeffs.velocity.mesh)
		gap = linearized_operator(coeffs, f) - linearized_operator_direct(coeffs, f)
		errors.append(float(np.max(np.abs(gap))))
	assert errors[1] <= errors[0] / 3.0


def test_collision_invariant_residual_of_zero(coeffs: CollisionCoefficients) -> None:
	zero = np.zeros((2,) + coeffs.velocity.shape)
	residual = collision_invariant_residual(coeffs, zero, np.array([0.1, -0.1]))
	assert residual.shape == (5,)
	assert np.array_equal(residual, np.zeros(5))


def test_norm_suite(coeffs: CollisionCoefficients) -> None:
	velocity = coeffs.velocity
	zero = norms(coeffs, np.zeros(velocity.shape))
	assert (zero.l2, zero.sigma, zero.sup, zero.energy) == (0.0, 0.0, 0.0, 0.0)
	ones = norms(coeffs, np.ones(velocity.shape))
	assert ones.l2**2 == pytest.approx((2.0 * velocity.v_max) ** 3)

	f = _gaussian_polynomial(velocity.mesh)
	weighted = norms(coeffs, f, theta=1.5)
	plain = norms(coeffs, velocity_weight(velocity.mesh, 1.5) * f)
	assert weighted.l2 == pytest.approx(plain.l2, rel=1e-12)
	assert weighted.sup == pytest.approx(plain.sup, rel=1e-12)


def test_kbar_bound_and_drift_scaling(coeffs: CollisionCoefficients) -> None:
	bound = kbar_bound(coeffs, samples=3)
	assert math.isfinite(bound) and bound > 0.0
	assert drift_scaling_ratio(coeffs) <= 2.0 ** (2.0 / 3.0) + 0.2
	assert drift_scaling_ratio(coeffs.scaled(0.0)) == 0.0


def test_unknown_backend_rejected() -> None:
	with pytest.raises(ValueError, match="backend"):
		CollisionCoefficients.build(VelocityGrid(4, 2.0), backend="fft")
