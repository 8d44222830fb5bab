"""Boundary-flattening charts, the mirror extension and interface continuity certificates.

A patch {p₃ = ρ(p₁, p₂)} is flattened by φ⁻¹(y) = η(y₁, y₂) + y₃·n(y₁, y₂) with
η = (y₁, y₂, ρ) and the unnormalized normal n = (−ρ₁, −ρ₂, 1). Velocities map
with v = A⁻¹w, so the phase map (y, w) ↦ (x, v) keeps the transport operator
in divergence-free form and sends specular pairs to specular pairs.
All matrices live in the patch-local frame; ambient quantities are rotated in
and out with the patch frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coefficients import CollisionCoefficients
from .geometry import BoundaryPatch, RhoDerivatives
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()

DET_FLOOR = 1e-10
SPECULAR_TOL = 1e-8
INTERFACE_OFFSETS = (1e-2, 5e-3, 2.5e-3)
R = np.diag([1.0, 1.0, -1.0])

CoefficientField = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


class ChartDegenerate(ValueError):
	"""Raised when det A⁻¹ drops to the floor (the point left the tubular chart)."""


class SpecularViolation(ValueError):
	"""Raised when a field fails f̃(y, w) = f̃(y, Rw) on the interface."""


@dataclass
class FlattenFrame:
	"""A⁻¹, A, C = A⁻ᵀA⁻¹ and the y-derivatives of A⁻¹ at a batch of chart points."""

	y: np.ndarray
	A_inv: np.ndarray
	A: np.ndarray
	C: np.ndarray
	C_inv: np.ndarray
	det_A_inv: np.ndarray
	dA_inv: np.ndarray
	rho: RhoDerivatives

	def B(self, w: np.ndarray) -> np.ndarray:
		"""∂v/∂y at velocity w: column k is (∂_{y_k}A⁻¹)w."""

		return np.einsum("...kij,...j->...ik", self.dA_inv, np.asarray(w, dtype=float))


def _inverse_jacobian(d: RhoDerivatives, y3: np.ndarray) -> np.ndarray:
	out = np.empty(y3.shape + (3, 3))
	out[..., 0, 0] = 1.0 - y3 * d.r11
	out[..., 0, 1] = -y3 * d.r12
	out[..., 0, 2] = -d.r1
	out[..., 1, 0] = -y3 * d.r12
	out[..., 1, 1] = 1.0 - y3 * d.r22
	out[..., 1, 2] = -d.r2
	out[..., 2, 0] = d.r1
	out[..., 2, 1] = d.r2
	out[..., 2, 2] = 1.0
	return out


def _inverse_jacobian_derivatives(d: RhoDerivatives, y3: np.ndarray) -> np.ndarray:
	"""∂_{y_k}A⁻¹ for k = 1, 2, 3 stacked on axis −3."""

	zeros = np.zeros_like(y3)
	d1 = np.stack(
		[
			np.stack([-y3 * d.r111, -y3 * d.r112, -d.r11], axis=-1),
			np.stack([-y3 * d.r112, -y3 * d.r122, -d.r12], axis=-1),
			np.stack([d.r11, d.r12, zeros], axis=-1),
		],
		axis=-2,
	)
	d2 = np.stack(
		[
			np.stack([-y3 * d.r112, -y3 * d.r122, -d.r12], axis=-1),
			np.stack([-y3 * d.r122, -y3 * d.r222, -d.r22], axis=-1),
			np.stack([d.r12, d.r22, zeros], axis=-1),
		],
		axis=-2,
	)
	d3 = np.stack(
		[
			np.stack([-d.r11, -d.r12, zeros], axis=-1),
			np.stack([-d.r12, -d.r22, zeros], axis=-1),
			np.stack([zeros, zeros, zeros], axis=-1),
		],
		axis=-2,
	)
	return np.stack([d1, d2, d3], axis=-3)


def frame_at(patch: BoundaryPatch, y: np.ndarray) -> FlattenFrame:
	y = np.asarray(y, dtype=float)
	d = patch.derivatives(y[..., 0], y[..., 1])
	y3 = y[..., 2] + np.zeros(d.r.shape)
	A_inv = _inverse_jacobian(d, y3)
	det = np.linalg.det(A_inv)
	if np.any(det <= DET_FLOOR):
		worst = float(np.min(det))
		raise ChartDegenerate(f"det A⁻¹ = {worst:.3e} on patch '{patch.name}'; the point left the tubular chart")
	A = np.linalg.inv(A_inv)
	C = np.swapaxes(A_inv, -1, -2) @ A_inv
	return FlattenFrame(
		y=y,
		A_inv=A_inv,
		A=A,
		C=C,
		C_inv=A @ np.swapaxes(A, -1, -2),
		det_A_inv=det,
		dA_inv=_inverse_jacobian_derivatives(d, y3),
		rho=d,
	)


def chart_point(patch: BoundaryPatch, y: np.ndarray) -> np.ndarray:
	"""φ⁻¹(y) in patch-local coordinates."""

	y = np.asarray(y, dtype=float)
	d = patch.derivatives(y[..., 0], y[..., 1])
	return np.stack([y[..., 0] - y[..., 2] * d.r1, y[..., 1] - y[..., 2] * d.r2, d.r + y[..., 2]], axis=-1)


def cofactor_inverse(frame: FlattenFrame) -> np.ndarray:
	"""A from the closed cofactor form (1/det A⁻¹)·adj(A⁻¹)."""

	d = frame.rho
	y3 = frame.y[..., 2] + np.zeros(d.r.shape)
	det = (
		y3**2 * (d.r11 * d.r22 - d.r12**2)
		+ y3 * (2.0 * d.r1 * d.r2 * d.r12 - d.r2**2 * d.r11 - d.r1**2 * d.r22 - d.r11 - d.r22)
		+ (d.r1**2 + d.r2**2 + 1.0)
	)
	adj = np.empty(y3.shape + (3, 3))
	adj[..., 0, 0] = 1.0 + d.r2**2 - y3 * d.r22
	adj[..., 0, 1] = -d.r1 * d.r2 + y3 * d.r12
	adj[..., 0, 2] = d.r1 + y3 * (d.r2 * d.r12 - d.r1 * d.r22)
	adj[..., 1, 0] = -d.r1 * d.r2 + y3 * d.r12
	adj[..., 1, 1] = 1.0 + d.r1**2 - y3 * d.r11
	adj[..., 1, 2] = d.r2 + y3 * (d.r1 * d.r12 - d.r2 * d.r11)
	adj[..., 2, 0] = -d.r1 + y3 * (d.r1 * d.r22 - d.r2 * d.r12)
	adj[..., 2, 1] = -d.r2 + y3 * (d.r2 * d.r11 - d.r1 * d.r12)
	adj[..., 2, 2] = 1.0 - y3 * (d.r11 + d.r22) + y3**2 * (d.r11 * d.r22 - d.r12**2)
	return adj / det[..., None, None]


def validity_depth(patch: BoundaryPatch, samples: int = 33) -> float:
	"""Half the smallest curvature radius over a sample grid of the chart box."""

	y1_min, y1_max, y2_min, y2_max = (float(np.clip(b, -10.0, 10.0)) for b in patch.chart_box)
	y1, y2 = np.meshgrid(np.linspace(y1_min, y1_max, samples), np.linspace(y2_min, y2_max, samples), indexing="ij")
	d = patch.derivatives(y1, y2)
	hessian = np.stack([np.stack([d.r11, d.r12], axis=-1), np.stack([d.r12, d.r22], axis=-1)], axis=-2)
	curvature = float(np.max(np.abs(np.linalg.eigvalsh(hessian))))
	return 0.5 / curvature if curvature > 0 else np.inf


# Phase maps ---------------------------------------------------------------------------


def push_phase(patch: BoundaryPatch, x: np.ndarray, v: np.ndarray, max_iter: int = 50, tol: float = 1e-13) -> Tuple[np.ndarray, np.ndarray]:
	"""(x, v) ↦ (y, w) = (φ(x), A v) for ambient points; Newton on φ⁻¹(y) = x."""

	p = patch.to_patch(np.asarray(x, dtype=float))
	v_local = np.asarray(v, dtype=float) @ patch.frame
	d = patch.derivatives(p[..., 0], p[..., 1])
	y = np.stack([p[..., 0], p[..., 1], (p[..., 2] - d.r) / np.sqrt(1.0 + d.r1**2 + d.r2**2)], axis=-1)
	for _ in range(max_iter):
		gap = chart_point(patch, y) - p
		d = patch.derivatives(y[..., 0], y[..., 1])
		step = np.linalg.solve(_inverse_jacobian(d, y[..., 2]), gap[..., None])[..., 0]
		y = y - step
		if float(np.max(np.abs(step))) <= tol * (1.0 + float(np.max(np.abs(y)))):
			break
	frame = frame_at(patch, y)
	return y, np.einsum("...ij,...j->...i", frame.A, v_local)


def pull_phase(patch: BoundaryPatch, y: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	"""(y, w) ↦ (x, v) = (φ⁻¹(y), A⁻¹w) in ambient coordinates."""

	frame = frame_at(patch, y)
	v_local = np.einsum("...ij,...j->...i", frame.A_inv, np.asarray(w, dtype=float))
	return patch.to_ambient(chart_point(patch, y)), v_local @ patch.frame.T


def specular_commutation_check(patch: BoundaryPatch, y: np.ndarray, w: np.ndarray) -> float:
	"""max |A⁻¹(Rw) − R_x(A⁻¹w)| on {y₃ = 0} with R_x the reflection in the true unit normal."""

	y = np.array(y, dtype=float)
	y[..., 2] = 0.0
	frame = frame_at(patch, y)
	w = np.asarray(w, dtype=float)
	d = frame.rho
	normal = np.stack([-d.r1, -d.r2, np.ones_like(d.r)], axis=-1)
	normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
	image = np.einsum("...ij,...j->...i", frame.A_inv, w)
	reflected = image - 2.0 * np.sum(image * normal, axis=-1, keepdims=True) * normal
	left = np.einsum("...ij,...j->...i", frame.A_inv, w @ R)
	return float(np.max(np.abs(left - reflected))) if left.size else 0.0


# Mirror extension -------------------------------------------------------------------


@dataclass
class ExtendedField:
	"""f̄ on both half spaces; y₃ is axis −4 with node k at ∓(k+½)h, w₃ the last axis."""

	lower: np.ndarray
	upper: np.ndarray
	h: float
	parity: str = "specular"

	def values(self) -> np.ndarray:
		"""Both blocks ordered by increasing y₃′."""

		return np.concatenate([np.flip(self.lower, axis=-4), self.upper], axis=-4)

	def interface_traces(self) -> Tuple[np.ndarray, np.ndarray]:
		"""One-sided traces at y₃′ = 0 by linear extrapolation from the ±h/2, ±3h/2 pair."""

		return _extrapolated_trace(self.lower), _extrapolated_trace(self.upper)

	def interface_value(self) -> np.ndarray:
		lower, upper = self.interface_traces()
		return 0.5 * (lower + upper)


def _extrapolated_trace(block: np.ndarray) -> np.ndarray:
	if block.shape[-4] < 2:
		return np.take(block, 0, axis=-4)
	return 1.5 * np.take(block, 0, axis=-4) - 0.5 * np.take(block, 1, axis=-4)


def mirror_extend(tilde_f: np.ndarray, h: float, interface: Optional[np.ndarray] = None) -> ExtendedField:
	"""f̄(y′, w′) = f̃(Ry′, Rw′) above the interface; raises when f̃ is not specular there."""

	tilde_f = np.asarray(tilde_f, dtype=float)
	if tilde_f.ndim < 4:
		raise ValueError("mirror_extend needs (..., y3, w1, w2, w3) data")
	trace = _extrapolated_trace(tilde_f) if interface is None else np.asarray(interface, dtype=float)
	violation = float(np.max(np.abs(trace - trace[..., ::-1]))) if trace.size else 0.0
	if violation > SPECULAR_TOL:
		raise SpecularViolation(f"interface data breaks f(y, w) = f(y, Rw) by {violation:.3e}")
	return ExtendedField(lower=tilde_f, upper=tilde_f[..., ::-1].copy(), h=float(h))


def extension_boundary_flux(extended: ExtendedField, phi: np.ndarray, w3: np.ndarray, measure: float = 1.0) -> Dict[str, float]:
	"""Both interface sides of ∫f̄φ w₃ dγ̃ (outward normals +e₃ below, −e₃ above) and their sum."""

	lower, upper = extended.interface_traces()
	lower_side = float(np.sum(lower * phi * w3)) * measure
	upper_side = -float(np.sum(upper * phi * w3)) * measure
	return {"lower": lower_side, "upper": upper_side, "sum": lower_side + upper_side}


# Transformed equation -------------------------------------------------------------------


def coefficient_field(coeffs: CollisionCoefficients, theta: Optional[float] = None) -> CoefficientField:
	"""(x, v) ↦ (σ_G, a_g or a_g^θ) in ambient coordinates from the tabulated coefficients."""

	def evaluate(x: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
		return coeffs.sigma_at(x, v), coeffs.a_g_at(x, v, theta)

	return evaluate


def _local_coefficients(patch: BoundaryPatch, field_fn: CoefficientField, y: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	x, v = pull_phase(patch, y, w)
	sigma, drift = field_fn(x, v)
	frame = patch.frame
	return np.einsum("ai,...ab,bj->...ij", frame, sigma, frame), drift @ frame


def transformed_coefficients(
	patch: BoundaryPatch,
	field_fn: CoefficientField,
	y: np.ndarray,
	w: np.ndarray,
	upper: bool = False,
) -> Tuple[np.ndarray, np.ndarray]:
	"""(𝔸, 𝔹) of ∂_t f̄ + w′·∇_{y′}f̄ = ∇_{w′}·(𝔸∇_{w′}f̄) + 𝔹·∇_{w′}f̄.

	Lower block: 𝔸 = Aσ̃Aᵀ, 𝔹 = ABw + Aã. Upper block: the same expressions
	evaluated at (Ry′, Rw′) and conjugated by R.
	"""

	y = np.asarray(y, dtype=float)
	w = np.asarray(w, dtype=float)
	if upper:
		y, w = y @ R, w @ R
	frame = frame_at(patch, y)
	sigma, drift = _local_coefficients(patch, field_fn, y, w)
	A = frame.A
	big_a = A @ sigma @ np.swapaxes(A, -1, -2)
	big_b = np.einsum("...ij,...j->...i", A @ frame.B(w), w) + np.einsum("...ij,...j->...i", A, drift)
	if upper:
		big_a = R @ big_a @ R
		big_b = big_b @ R
	return big_a, big_b


@dataclass
class InterfaceCertificate:
	a_continuity: float
	lambda_parity: float
	lambda_inverse: float
	c_cross: float
	commutation: float
	cofactor: float
	big_a_jumps: List[float]
	big_a_extrapolated: float
	big_b_jumps: List[float]
	offsets: Tuple[float, ...] = INTERFACE_OFFSETS
	min_eigenvalue: float = field(default=float("nan"))


def _interface_samples(patch: BoundaryPatch, samples: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
	y1_min, y1_max, y2_min, y2_max = (float(np.clip(b, -10.0, 10.0)) for b in patch.chart_box)
	y = np.stack([rng.uniform(y1_min, y1_max, samples), rng.uniform(y2_min, y2_max, samples), np.zeros(samples)], axis=-1)
	return y, rng.normal(size=(samples, 3))


def interface_continuity_certificate(
	patch: BoundaryPatch,
	field_fn: CoefficientField,
	samples: int = 200,
	rng: Optional[np.random.Generator] = None,
	offsets: Sequence[float] = INTERFACE_OFFSETS,
) -> InterfaceCertificate:
	"""Residuals of the three interface claims plus the one-sided 𝔸 and 𝔹 jumps."""

	rng = rng or np.random.default_rng(0)
	y, w = _interface_samples(patch, samples, rng)
	on_wall = frame_at(patch, y)

	offsets = tuple(float(item) for item in offsets)
	shift = np.array([0.0, 0.0, offsets[-1]])
	below = frame_at(patch, y - shift)
	mirrored = frame_at(patch, (y + shift) @ R)
	a_continuity = float(np.max(np.abs(below.A - mirrored.A)))

	lam = np.einsum("...i,...ij,...j->...", w, on_wall.C, w)
	lam_bar = np.einsum("...i,...ij,...j->...", w @ R, on_wall.C, w @ R)
	lambda_parity = float(np.max(np.abs(lam - lam_bar)))
	lambda_inverse = float(np.max(np.abs(R @ on_wall.C_inv @ R - on_wall.C_inv)))
	c_cross = float(np.max(np.abs(on_wall.C[..., [0, 1], 2])))

	a_jumps, b_jumps, min_eig = [], [], np.inf
	for delta in offsets:
		step = np.array([0.0, 0.0, delta])
		lower_a, lower_b = transformed_coefficients(patch, field_fn, y - step, w)
		upper_a, upper_b = transformed_coefficients(patch, field_fn, y + step, w, upper=True)
		a_jumps.append(float(np.max(np.abs(lower_a - upper_a))))
		b_jumps.append(float(np.max(np.abs(lower_b - upper_b))))
		min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(lower_a))), float(np.min(np.linalg.eigvalsh(upper_a))))
	# quadratic through three offsets leaves an O(δ³) intercept
	degree = min(2, len(offsets) - 1)
	intercept = float(np.polyfit(np.array(offsets), np.array(a_jumps), degree)[-1]) if degree else a_jumps[0]

	certificate = InterfaceCertificate(
		a_continuity=a_continuity,
		lambda_parity=lambda_parity,
		lambda_inverse=lambda_inverse,
		c_cross=c_cross,
		commutation=specular_commutation_check(patch, y, w),
		cofactor=float(np.max(np.abs(cofactor_inverse(on_wall) - on_wall.A))),
		big_a_jumps=a_jumps,
		big_a_extrapolated=abs(float(intercept)),
		big_b_jumps=b_jumps,
		offsets=offsets,
		min_eigenvalue=min_eig,
	)
	LOGGER.info(
		"Interface certificate for '%s': commutation %.2e, c-cross %.2e, 𝔸 jump → %.2e",
		patch.name,
		certificate.commutation,
		certificate.c_cross,
		certificate.big_a_extrapolated,
	)
	return certificate


def transport_residual(
	patch: BoundaryPatch,
	f: Callable[[np.ndarray, np.ndarray], np.ndarray],
	y: np.ndarray,
	w: np.ndarray,
	h: float,
) -> float:
	"""max |v·∇_x f − (w·∇_y f̃ − (ABw)·∇_w f̃)| with centred differences of step h."""

	y = np.asarray(y, dtype=float)
	w = np.asarray(w, dtype=float)
	tilde = lambda yy, ww: f(*pull_phase(patch, yy, ww))
	x, v = pull_phase(patch, y, w)
	direct = (f(x + h * v, v) - f(x - h * v, v)) / (2.0 * h)

	grad_y = np.zeros(y.shape)
	grad_w = np.zeros(w.shape)
	for k in range(3):
		e = np.zeros(3)
		e[k] = h
		grad_y[..., k] = (tilde(y + e, w) - tilde(y - e, w)) / (2.0 * h)
		grad_w[..., k] = (tilde(y, w + e) - tilde(y, w - e)) / (2.0 * h)
	frame = frame_at(patch, y)
	drift = np.einsum("...ij,...j->...i", frame.A @ frame.B(w), w)
	flattened = np.sum(w * grad_y, axis=-1) - np.sum(drift * grad_w, axis=-1)
	return float(np.max(np.abs(direct - flattened)))
