"""Tests for domains, normals, reflection and normal coordinates."""

import numpy as np
import pytest

from landau_lab.geometry import (
	Ball,
	BoundaryPatch,
	DegenerateGradient,
	DomainSpec,
	Ellipsoid,
	GraphPatchDomain,
	HalfSpace,
	NotOnBoundary,
	OutsideDomain,
	PhasePoint,
	Slab,
	build_domain,
	classify,
	has_rotational_symmetry,
	normal_coordinates,
	outward_normal,
	reflect,
)


class _Pinched(DomainSpec):
	"""ζ = x₃², whose gradient vanishes on its zero set."""

	name = "pinched"

	def __init__(self) -> None:
		super().__init__(delta0=0.1)

	def zeta(self, x: np.ndarray) -> np.ndarray:
		return np.asarray(x, dtype=float)[..., 2] ** 2

	def grad_zeta(self, x: np.ndarray) -> np.ndarray:
		x = np.asarray(x, dtype=float)
		grad = np.zeros_like(x)
		grad[..., 2] = 2.0 * x[..., 2]
		return grad


def test_outward_normal_examples() -> None:
	assert np.allclose(outward_normal(Ball(), (0.0, 0.0, 1.0)), (0.0, 0.0, 1.0))
	assert np.allclose(outward_normal(HalfSpace(), (0.3, -2.0, 0.0)), (0.0, 0.0, 1.0))
	normal = outward_normal(Ellipsoid((2.0, 1.0, 1.0)), (2.0, 0.0, 0.0))
	assert np.allclose(normal, (1.0, 0.0, 0.0))
	assert abs(np.linalg.norm(normal) - 1.0) <= 1e-14


def test_outward_normal_errors() -> None:
	with pytest.raises(NotOnBoundary):
		outward_normal(Ball(), (0.0, 0.0, 0.5))
	with pytest.raises(DegenerateGradient):
		outward_normal(_Pinched(), (0.0, 0.0, 0.0))


def test_reflect_examples() -> None:
	assert np.array_equal(reflect(np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.0, 1.0])), [1.0, 2.0, -3.0])
	assert np.array_equal(reflect(np.array([1.0, 2.0, 0.0]), np.array([0.0, 0.0, 1.0])), [1.0, 2.0, 0.0])
	n = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
	assert np.allclose(reflect(np.array([1.0, 0.0, 0.0]), n), [0.0, -1.0, 0.0], atol=1e-15)


def test_reflect_is_an_isometric_involution() -> None:
	rng = np.random.default_rng(7)
	n = rng.normal(size=(10_000, 3))
	n /= np.linalg.norm(n, axis=-1, keepdims=True)
	v = rng.normal(size=(10_000, 3))

	twice = reflect(reflect(v, n), n)
	assert np.max(np.abs(twice - v)) <= 1e-14 * np.max(np.abs(v)) * 10
	speed_gap = np.abs(np.linalg.norm(reflect(v, n), axis=-1) - np.linalg.norm(v, axis=-1))
	assert np.max(speed_gap) <= 1e-14 * np.max(np.linalg.norm(v, axis=-1))


def test_classify_half_space() -> None:
	space = HalfSpace()
	assert classify(space, PhasePoint.of((0, 0, 0), (0, 0, 1))).kind == "outgoing"
	assert classify(space, PhasePoint.of((0, 0, 0), (0, 0, -1))).kind == "incoming"
	assert classify(space, PhasePoint.of((0, 0, 0), (1, 0, 0))).kind == "grazing"
	interior = classify(space, PhasePoint.of((0, 0, -1), (5, 5, 5)))
	assert interior.kind == "interior" and interior.n is None
	with pytest.raises(OutsideDomain):
		classify(space, PhasePoint.of((0, 0, 0.1), (0, 0, 1)))


def test_normal_coordinates_examples() -> None:
	flat = normal_coordinates(HalfSpace(delta0=0.5), PhasePoint.of((0, 0, -0.2), (1, 1, 4)))
	assert flat.x_perp == pytest.approx(0.2)
	assert flat.v_perp == pytest.approx(4.0)
	assert flat.in_bd

	sphere = normal_coordinates(Ball(delta0=0.3), PhasePoint.of((0, 0, 0.5), (0, 0, 1)))
	assert sphere.x_perp == pytest.approx(0.5)
	assert sphere.v_perp == pytest.approx(1.0)
	assert not sphere.in_bd

	tangent = normal_coordinates(Ball(), PhasePoint.of((0.0, 0.0, 0.9), (1.0, 0.0, 0.0)))
	assert tangent.v_perp == pytest.approx(0.0, abs=1e-14)


def test_slab_walls() -> None:
	slab = Slab(half_width=1.0, period=2.0, delta0=0.5)
	x_perp, normals = slab.normal_frame(np.array([[0.1, 0.3, 0.7], [0.0, 0.0, -0.9]]))
	assert np.allclose(x_perp, [0.3, 0.1])
	assert np.allclose(normals[:, 2], [1.0, -1.0])
	slab.validate()
	with pytest.raises(ValueError, match="half width"):
		Slab(half_width=0.2, delta0=0.5)


def test_overlapping_charts_agree_on_distance() -> None:
	ball = Ball(delta0=0.3)
	direction = np.array([0.6, 0.5, 0.6]) / np.linalg.norm([0.6, 0.5, 0.6])
	x = 0.8 * direction
	_, reference = ball.closest_point(x[None, :])
	by_patch = {}
	for patch in (patch for patch in ball.patches if patch.name.startswith("+")):
		x_hat, distance, converged = patch.project(x[None, :])
		p = patch.to_patch(x_hat)
		if converged[0] and patch.in_box(p[:, 0], p[:, 1])[0]:
			by_patch[patch.name] = float(distance[0])
	assert {"+e1", "+e2", "+e3"} <= set(by_patch)
	assert max(abs(value - reference[0]) for value in by_patch.values()) <= 1e-8


def test_rotational_symmetry_detector() -> None:
	ball = Ball()
	for axis in [(0, 0, 1), (1, 1, 0), (0.3, -0.2, 0.9)]:
		assert has_rotational_symmetry(ball, ball.center, axis)[0]

	spheroid = Ellipsoid((2.0, 1.0, 1.0))
	assert has_rotational_symmetry(spheroid, spheroid.center, (1, 0, 0))[0]
	assert not has_rotational_symmetry(spheroid, spheroid.center, (0, 1, 0))[0]

	generic = Ellipsoid((3.0, 2.0, 1.0))
	for axis in np.eye(3):
		symmetric, residual = has_rotational_symmetry(generic, generic.center, axis)
		assert not symmetric and residual > 1e-3


def test_patch_validation() -> None:
	with pytest.raises(ValueError, match="orthonormal"):
		BoundaryPatch(0, (-1, 1, -1, 1), frame=2 * np.eye(3))
	with pytest.raises(ValueError, match="right-handed"):
		BoundaryPatch(0, (-1, 1, -1, 1), frame=np.diag([1.0, 1.0, -1.0]))
	with pytest.raises(ValueError, match="empty"):
		BoundaryPatch(0, (1, -1, -1, 1))


def test_build_domain_graph_patch() -> None:
	domain = build_domain(
		"graph_patch",
		{"delta0": 0.1},
		patches=[{"coefficients": [[0.0, 0.0, 0.2], [0.0], [0.2]], "chart_box": [-0.5, 0.5, -0.5, 0.5]}],
	)
	assert isinstance(domain, GraphPatchDomain)
	x = np.array([[0.3, -0.2, 0.2 * 0.09 + 0.2 * 0.04]])
	assert abs(float(domain.zeta(x)[0])) <= 1e-12
	x_hat, distance = domain.closest_point(np.array([[0.1, 0.1, -0.05]]))
	assert distance[0] == pytest.approx(np.linalg.norm(x_hat[0] - [0.1, 0.1, -0.05]))

	with pytest.raises(ValueError, match="Unknown domain"):
		build_domain("torus", {})
