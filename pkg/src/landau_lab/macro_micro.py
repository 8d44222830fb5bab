"""Macro-micro decomposition, auxiliary Poisson problems and the macroscopic control monitors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import sympy as sp
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .coefficients import CollisionCoefficients, collision_invariants, linearized_operator, norms, sqrt_maxwellian
from .grid import PhaseGrid, VelocityGrid, reflect_velocity_axes, wall_layers
from .utils import setup_logging


LOGGER = logging.getLogger(__name__)
setup_logging()

BC_KINDS = ("neumann_zero", "tangential", "mean_zero")
SOLVABILITY_TOL = 1e-6
V_SYMBOLS = sp.symbols("v1 v2 v3", real=True)


class SolvabilityViolation(ValueError):
	"""Raised when a Neumann right-hand side does not integrate to zero."""


# Symbolic Gaussian moments ----------------------------------------------------------


def gaussian_moment(expr: sp.Expr, variables: Sequence[sp.Symbol] = V_SYMBOLS) -> sp.Expr:
	"""E[p(v)] for a polynomial p under the standard Gaussian; ⟨p√μ, q√μ⟩ = E[pq]."""

	poly = sp.Poly(sp.expand(expr), *variables)
	total = sp.Integer(0)
	for powers, coeff in poly.terms():
		if any(k % 2 for k in powers):
			continue
		term = coeff
		for k in powers:
			term *= sp.factorial2(k - 1) if k else 1
		total += term
	return sp.nsimplify(total)


def _speed_sq() -> sp.Expr:
	return sum(v**2 for v in V_SYMBOLS)


def invariant_polynomials() -> List[sp.Expr]:
	v1, v2, v3 = V_SYMBOLS
	return [sp.Integer(1), v1, v2, v3, (_speed_sq() - 3) / sp.sqrt(6)]


def burnett_polynomial(kind: str, index: Tuple[int, ...]) -> sp.Expr:
	"""Polynomial part of A_j or B_kl (the Burnett function divided by √μ)."""

	_check_indices(kind, index)
	if kind == "A":
		return V_SYMBOLS[index[0]] * (_speed_sq() - 5) / sp.sqrt(10)
	k, l = index
	return V_SYMBOLS[k] * V_SYMBOLS[l] - (sp.Integer(1) if k == l else 0) * _speed_sq() / 3


@lru_cache(maxsize=1)
def symbolic_gram() -> Dict[str, sp.Matrix]:
	"""Exact Gram matrices of {χ_k}, {A_j} and the cross block ⟨A_j, χ_k⟩."""

	chi = invariant_polynomials()
	burnett_a = [burnett_polynomial("A", (j,)) for j in range(3)]
	return {
		"chi": sp.Matrix(5, 5, lambda i, j: gaussian_moment(chi[i] * chi[j])),
		"A": sp.Matrix(3, 3, lambda i, j: gaussian_moment(burnett_a[i] * burnett_a[j])),
		"A_chi": sp.Matrix(3, 5, lambda i, j: gaussian_moment(burnett_a[i] * chi[j])),
	}


# Burnett functions and projection ---------------------------------------------------


def _check_indices(kind: str, index: Tuple[int, ...]) -> None:
	if kind == "A" and len(index) == 1 and 0 <= index[0] < 3:
		return
	if kind == "B" and len(index) == 2 and all(0 <= k < 3 for k in index):
		return
	raise ValueError(f"invalid Burnett index {kind}{index}")


def burnett(kind: str, index: Tuple[int, ...], v: np.ndarray) -> np.ndarray:
	"""A_j(v) = v_j(|v|²−5)/√10·√μ or B_kl(v) = (v_kv_l − δ_kl|v|²/3)√μ."""

	_check_indices(kind, index)
	v = np.asarray(v, dtype=float)
	root = sqrt_maxwellian(v)
	speed2 = np.sum(v * v, axis=-1)
	if kind == "A":
		j = index[0]
		return v[..., j] * (speed2 - 5.0) / math.sqrt(10.0) * root
	k, l = index
	return (v[..., k] * v[..., l] - (speed2 / 3.0 if k == l else 0.0)) * root


@dataclass
class MacroFields:
	"""a, b, c on the x-grid and the microscopic remainder d = (I−P)f."""

	a: np.ndarray
	b: np.ndarray
	c: np.ndarray
	d: np.ndarray

	def macro_part(self, velocity: VelocityGrid) -> np.ndarray:
		chi = collision_invariants(velocity.mesh)
		coeffs = np.concatenate([self.a[..., None], self.b, self.c[..., None]], axis=-1)
		return np.einsum("...k,abck->...abc", coeffs, chi)

	def reconstruct(self, velocity: VelocityGrid) -> np.ndarray:
		return self.macro_part(velocity) + self.d


def project_P(velocity: VelocityGrid, f: np.ndarray) -> MacroFields:
	"""Pf = Σ⟨f, χ_k⟩χ_k by velocity quadrature over the trailing three axes."""

	f = np.asarray(f, dtype=float)
	chi = collision_invariants(velocity.mesh)
	moments = np.einsum("...abc,abck->...k", f, chi) * velocity.cell_volume
	macro = MacroFields(a=moments[..., 0], b=moments[..., 1:4], c=moments[..., 4], d=np.zeros_like(f))
	macro.d = f - macro.macro_part(velocity)
	return macro


def gram_matrix(velocity: VelocityGrid) -> np.ndarray:
	chi = collision_invariants(velocity.mesh)
	return np.einsum("abcj,abck->jk", chi, chi) * velocity.cell_volume


def odd_velocity_moments(velocity: VelocityGrid, f: np.ndarray) -> float:
	"""max |∫v₁³√μf|, |∫v₁v_iv_j√μf| over the trailing velocity axes."""

	v = velocity.mesh
	root = sqrt_maxwellian(v)
	integrals = [np.sum(f * v[..., 0] ** 3 * root, axis=(-3, -2, -1))]
	for i in range(3):
		for j in range(i, 3):
			integrals.append(np.sum(f * v[..., 0] * v[..., i] * v[..., j] * root, axis=(-3, -2, -1)))
	return max(float(np.max(np.abs(item))) for item in integrals) * velocity.cell_volume


# Poisson problems on the slab ------------------------------------------------------


@dataclass
class PoissonSolution:
	potential: np.ndarray
	bc_kind: str
	residual: float
	h1: float


def _periodic_second_difference(n: int, h: float) -> sparse.csr_matrix:
	if n == 1:
		return sparse.csr_matrix((1, 1))
	if n == 2:
		return sparse.csr_matrix(np.array([[-2.0, 2.0], [2.0, -2.0]]) / h**2)
	ops = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
	ops[0, n - 1] = 1.0
	ops[n - 1, 0] = 1.0
	return ops.tocsr() / h**2


def _wall_second_difference(n: int, h: float, dirichlet: bool) -> sparse.csr_matrix:
	"""Cell-centred second difference across the slab; the wall sits half a cell beyond the outer nodes."""

	ops = sparse.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
	edge = -3.0 if dirichlet else -1.0
	ops[0, 0] = edge
	ops[n - 1, n - 1] = edge
	return ops.tocsr() / h**2


def slab_laplacian(grid: PhaseGrid, dirichlet_walls: bool = False) -> sparse.csr_matrix:
	"""Kronecker-sum Laplacian on the periodic-in-x₁,x₂ slab x-grid (C order)."""

	(n1, n2, n3), (h1, h2, h3) = grid.nx, grid.h_x
	eye = lambda n: sparse.identity(n, format="csr")
	d1 = _periodic_second_difference(n1, h1)
	d2 = _periodic_second_difference(n2, h2)
	d3 = _wall_second_difference(n3, h3, dirichlet_walls)
	return (
		sparse.kron(sparse.kron(d1, eye(n2)), eye(n3))
		+ sparse.kron(sparse.kron(eye(n1), d2), eye(n3))
		+ sparse.kron(sparse.kron(eye(n1), eye(n2)), d3)
	).tocsr()


def _solve_scalar(grid: PhaseGrid, rhs: np.ndarray, dirichlet: bool) -> np.ndarray:
	laplacian = slab_laplacian(grid, dirichlet_walls=dirichlet)
	b = -np.asarray(rhs, dtype=float).ravel()
	if dirichlet:
		return spsolve(laplacian.tocsc(), b).reshape(grid.x_shape)
	# Bordered system: the multiplier row fixes the mean-zero gauge of the singular Neumann operator.
	ones = sparse.csr_matrix(np.ones((1, b.size)))
	bordered = sparse.bmat([[laplacian, ones.T], [ones, None]], format="csc")
	solution = spsolve(bordered, np.concatenate([b, [0.0]]))
	return solution[:-1].reshape(grid.x_shape)


def _check_solvability(grid: PhaseGrid, rhs: np.ndarray, label: str) -> None:
	total = abs(float(np.sum(rhs)))
	scale = float(np.sum(np.abs(rhs)))
	if scale and total > SOLVABILITY_TOL * scale:
		raise SolvabilityViolation(f"{label}: ∫rhs = {total * grid.x_cell_volume:.3e} violates Neumann compatibility")


def _dirichlet_energy(grid: PhaseGrid, potential: np.ndarray, dirichlet: bool) -> float:
	flat = potential.ravel()
	return float(-flat @ (slab_laplacian(grid, dirichlet) @ flat)) * grid.x_cell_volume


def poisson_solve(grid: PhaseGrid, rhs: np.ndarray, bc_kind: str) -> PoissonSolution:
	"""Solve −ΔΦ = rhs on the slab x-grid.

	``neumann_zero`` checks compatibility and fixes the mean-zero gauge;
	``mean_zero`` removes the mean of rhs first (time-derivative potentials);
	``tangential`` takes a 3-vector rhs and imposes Φ·n = 0 with ∂_nΦ parallel to n.
	"""

	if bc_kind not in BC_KINDS:
		raise ValueError(f"unknown boundary condition '{bc_kind}'")
	rhs = np.asarray(rhs, dtype=float)
	if bc_kind == "tangential":
		if rhs.shape != grid.x_shape + (3,):
			raise ValueError("tangential Poisson problems take a vector right-hand side")
		components = []
		for k in range(3):
			part = rhs[..., k]
			dirichlet = k == 2
			if not dirichlet:
				_check_solvability(grid, part, f"component {k + 1}")
			components.append((_solve_scalar(grid, part, dirichlet), dirichlet))
		potential = np.stack([item for item, _ in components], axis=-1)
		residual = max(_residual(grid, item, rhs[..., k], dirichlet) for k, (item, dirichlet) in enumerate(components))
		h1 = math.sqrt(sum(_dirichlet_energy(grid, item, dirichlet) for item, dirichlet in components))
		return PoissonSolution(potential=potential, bc_kind=bc_kind, residual=residual, h1=h1)
	if rhs.shape != grid.x_shape:
		raise ValueError("scalar Poisson problems take a right-hand side on the x-grid")
	if bc_kind == "neumann_zero":
		_check_solvability(grid, rhs, "neumann_zero")
	else:
		rhs = rhs - float(np.mean(rhs))
	potential = _solve_scalar(grid, rhs, dirichlet=False)
	return PoissonSolution(
		potential=potential,
		bc_kind=bc_kind,
		residual=_residual(grid, potential, rhs, False),
		h1=math.sqrt(max(_dirichlet_energy(grid, potential, False), 0.0)),
	)


def _residual(grid: PhaseGrid, potential: np.ndarray, rhs: np.ndarray, dirichlet: bool) -> float:
	"""‖ΔΦ + rhs‖/‖rhs‖ with the compatible part of rhs for the Neumann operator."""

	if not dirichlet:
		rhs = rhs - float(np.mean(rhs))
	applied = (slab_laplacian(grid, dirichlet) @ potential.ravel()).reshape(grid.x_shape)
	scale = float(np.linalg.norm(rhs))
	return float(np.linalg.norm(applied + rhs)) / scale if scale else float(np.linalg.norm(applied))


def x_gradient(grid: PhaseGrid, potential: np.ndarray) -> np.ndarray:
	"""∇_x on the slab grid: periodic central differences in x₁, x₂; one-sided near the walls in x₃."""

	h1, h2, h3 = grid.h_x
	d1 = (np.roll(potential, -1, axis=0) - np.roll(potential, 1, axis=0)) / (2.0 * h1)
	d2 = (np.roll(potential, -1, axis=1) - np.roll(potential, 1, axis=1)) / (2.0 * h2)
	d3 = np.gradient(potential, h3, axis=2)
	return np.stack([d1, d2, d3], axis=-1)


# Test functions ----------------------------------------------------------------------


@dataclass
class MomentTestFunctions:
	psi_a: np.ndarray
	psi_b: np.ndarray
	psi_c: np.ndarray
	phi_a: PoissonSolution
	phi_b: PoissonSolution
	phi_c: PoissonSolution

	@property
	def total(self) -> np.ndarray:
		return self.psi_a + self.psi_b + self.psi_c


def build_test_functions(grid: PhaseGrid, macro: MacroFields) -> MomentTestFunctions:
	"""ψ_a, ψ_b, ψ_c from the potentials −Δφ_a = a, −Δφ_b = b, −Δφ_c = c."""

	velocity = grid.velocity
	v = velocity.mesh
	chi = collision_invariants(v)
	phi_a = poisson_solve(grid, macro.a - float(np.mean(macro.a)), "neumann_zero")
	phi_b = poisson_solve(grid, macro.b - np.mean(macro.b, axis=(0, 1, 2)), "tangential")
	phi_c = poisson_solve(grid, macro.c - float(np.mean(macro.c)), "neumann_zero")
	grad_a = x_gradient(grid, phi_a.potential)
	grad_c = x_gradient(grid, phi_c.potential)
	jac_b = np.stack([x_gradient(grid, phi_b.potential[..., i]) for i in range(3)], axis=-2)

	burnett_a = np.stack([burnett("A", (j,), v) for j in range(3)], axis=-1)
	burnett_b = np.stack([np.stack([burnett("B", (i, j), v) for j in range(3)], axis=-1) for i in range(3)], axis=-2)
	moment_a = math.sqrt(10.0) * burnett_a - 5.0 * chi[..., 1:4]

	psi_a = np.einsum("xyzj,abcj->xyzabc", grad_a, moment_a)
	divergence_b = np.trace(jac_b, axis1=-2, axis2=-1)
	psi_b = np.einsum("xyzij,abcij->xyzabc", jac_b, burnett_b) - (math.sqrt(6.0) / 6.0) * np.einsum(
		"xyz,abc->xyzabc", divergence_b, chi[..., 4]
	)
	psi_c = math.sqrt(10.0) * np.einsum("xyzj,abcj->xyzabc", grad_c, burnett_a)
	return MomentTestFunctions(psi_a=psi_a, psi_b=psi_b, psi_c=psi_c, phi_a=phi_a, phi_b=phi_b, phi_c=phi_c)


def time_derivative(times: np.ndarray, series: np.ndarray) -> np.ndarray:
	"""Three-point centred differences along the leading (time) axis."""

	edge_order = 2 if len(times) >= 3 else 1
	return np.gradient(series, np.asarray(times, dtype=float), axis=0, edge_order=edge_order)


def specular_cancellation(grid: PhaseGrid, potential: np.ndarray, layers: Tuple[np.ndarray, np.ndarray]) -> float:
	"""∫_γ ψ_c f (v·n) dv dS on both walls.

	The outgoing half of f is the solver's wall trace and the incoming half is
	the specular datum f(v) = f(Rv) built from it. On the wall ∂₃φ_c = 0 by the
	Neumann condition, so only tangential derivatives enter ψ_c; the wall value
	of φ_c is the linear extrapolation to x₃ = ±w.
	"""

	v = grid.velocity.mesh
	v3 = v[..., 2]
	burnett_a = np.stack([burnett("A", (j,), v) for j in range(2)], axis=-1)
	h1, h2, _ = grid.h_x
	total = 0.0
	for layer, inner, edge, sign in ((layers[0], 1, 0, -1.0), (layers[1], -2, -1, 1.0)):
		wall = 1.5 * potential[:, :, edge] - 0.5 * potential[:, :, inner]
		gradient = np.stack(
			[
				(np.roll(wall, -1, axis=0) - np.roll(wall, 1, axis=0)) / (2.0 * h1),
				(np.roll(wall, -1, axis=1) - np.roll(wall, 1, axis=1)) / (2.0 * h2),
			],
			axis=-1,
		)
		psi = math.sqrt(10.0) * np.einsum("xyj,abcj->xyabc", gradient, burnett_a)
		outgoing = sign * v3 > 0.0
		trace = np.where(outgoing, layer, reflect_velocity_axes(layer))
		total += float(np.sum(psi * trace * sign * v3)) * grid.wall_area_element * grid.velocity.cell_volume
	return abs(total)


@dataclass
class MacroControlReport:
	times: np.ndarray
	lhs: np.ndarray
	rhs: np.ndarray
	eta: np.ndarray
	constant: float
	fitted: float
	eta_constant: float
	margin: float
	passed: bool
	potential_ratios: Dict[str, float]
	mean_drift: Dict[str, float]
	boundary_cancellation: float
	stencil: str = "three-point centred"


def sigma_split(coeffs: CollisionCoefficients, grid: PhaseGrid, values: np.ndarray) -> Tuple[float, float, MacroFields]:
	"""(‖Pf‖²_σ, ‖(I−P)f‖²_σ, macro fields)."""

	macro = project_P(grid.velocity, values)
	macro_norm = norms(coeffs, macro.macro_part(grid.velocity), x_volume=grid.x_cell_volume).sigma ** 2
	micro_norm = norms(coeffs, macro.d, x_volume=grid.x_cell_volume).sigma ** 2
	return macro_norm, micro_norm, macro


def _cumulative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
	return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (values[1:] + values[:-1]))])


def macro_control_report(
	coeffs: CollisionCoefficients,
	grid: PhaseGrid,
	times: Sequence[float],
	fields: Sequence[np.ndarray],
	safety: float = 2.0,
	tolerance: float = 1e-10,
	constant: Optional[float] = None,
	traces: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> MacroControlReport:
	"""Both sides of ∫‖Pf‖²_σ ≤ η(t) − η(t₀) + C∫‖(I−P)f‖²_σ.

	C is ``safety`` times the smallest constant fitting this series unless a
	``constant`` fitted elsewhere is given; ``fitted`` always reports the former.
	``traces`` are the final wall traces (default: the edge layers of the last field).
	"""

	times = np.asarray(times, dtype=float)
	splits = [sigma_split(coeffs, grid, np.asarray(values)) for values in fields]
	macro_sq = np.array([item[0] for item in splits])
	micro_sq = np.array([item[1] for item in splits])
	macros = [item[2] for item in splits]
	test_functions = [build_test_functions(grid, macro) for macro in macros]
	eta = np.array([-grid.integrate(functions.total * np.asarray(values)) for functions, values in zip(test_functions, fields)])
	lhs = _cumulative(times, macro_sq)
	dissipation = _cumulative(times, micro_sq)
	excess = lhs - (eta - eta[0])
	positive = dissipation > tolerance
	fitted = float(np.max(excess[positive] / dissipation[positive])) if np.any(positive) else 0.0
	fitted = safety * max(fitted, 0.0)
	constant = fitted if constant is None else float(constant)
	rhs = eta - eta[0] + constant * dissipation
	margin = float(np.min(rhs - lhs))
	l2_sq = np.array([float(np.sum(np.asarray(values) ** 2)) * grid.cell_volume for values in fields])
	eta_constant = float(np.max(np.abs(eta[l2_sq > 0] / l2_sq[l2_sq > 0]))) if np.any(l2_sq > 0) else 0.0

	a_series = np.stack([macro.a for macro in macros])
	b_series = np.stack([macro.b for macro in macros])
	c_series = np.stack([macro.c for macro in macros])
	ratios = _potential_ratios(grid, times, a_series, b_series, c_series, micro_sq)
	volume = grid.x_cell_volume
	drift = {
		"a": float(abs(np.sum(a_series[-1]) - np.sum(a_series[0])) * volume),
		"c": float(abs(np.sum(c_series[-1]) - np.sum(c_series[0])) * volume),
	}
	cancellation = specular_cancellation(grid, test_functions[-1].phi_c.potential, traces if traces is not None else wall_layers(np.asarray(fields[-1])))
	passed = margin >= -tolerance * max(1.0, float(np.max(np.abs(lhs))))
	LOGGER.info("Macro control: C=%.4g (fitted %.4g), margin %.3e, η constant %.4g", constant, fitted, margin, eta_constant)
	return MacroControlReport(
		times=times,
		lhs=lhs,
		rhs=rhs,
		eta=eta,
		constant=constant,
		fitted=fitted,
		eta_constant=eta_constant,
		margin=margin,
		passed=passed,
		potential_ratios=ratios,
		mean_drift=drift,
		boundary_cancellation=cancellation,
	)


def _potential_ratios(
	grid: PhaseGrid,
	times: np.ndarray,
	a_series: np.ndarray,
	b_series: np.ndarray,
	c_series: np.ndarray,
	micro_sq: np.ndarray,
) -> Dict[str, float]:
	"""Fitted constants of ‖Φ_a‖_{H¹} ≲ ‖b‖₂, ‖Φ_b‖_{H¹} ≲ ‖a‖₂+‖c‖₂+‖d‖_σ, ‖Φ_c‖_{H¹} ≲ ‖b‖₂+‖d‖_σ."""

	if len(times) < 2:
		return {"phi_a": 0.0, "phi_b": 0.0, "phi_c": 0.0}
	da = time_derivative(times, a_series)
	db = time_derivative(times, b_series)
	dc = time_derivative(times, c_series)
	l2 = lambda field: math.sqrt(float(np.sum(field * field)) * grid.x_cell_volume)
	ratios = {"phi_a": 0.0, "phi_b": 0.0, "phi_c": 0.0}
	for k in range(len(times)):
		micro = math.sqrt(micro_sq[k])
		pairs = (
			("phi_a", poisson_solve(grid, da[k], "mean_zero").h1, l2(b_series[k])),
			("phi_b", _tangential_h1(grid, db[k]), l2(a_series[k]) + l2(c_series[k]) + micro),
			("phi_c", poisson_solve(grid, dc[k], "mean_zero").h1, l2(b_series[k]) + micro),
		)
		for name, numerator, denominator in pairs:
			if denominator > 0.0:
				ratios[name] = max(ratios[name], numerator / denominator)
	return ratios


def _tangential_h1(grid: PhaseGrid, rhs: np.ndarray) -> float:
	compatible = rhs.copy()
	compatible[..., :2] -= np.mean(rhs[..., :2], axis=(0, 1, 2))
	return poisson_solve(grid, compatible, "tangential").h1


# Coercivity and decay -----------------------------------------------------------------


@dataclass
class CoercivityReport:
	delta: float
	quotients: List[float]
	null_space_residual: float
	integrated_delta: Optional[float] = None


def _sample_fields(velocity: VelocityGrid, samples: int, rng: np.random.Generator) -> List[np.ndarray]:
	v = velocity.mesh
	root = sqrt_maxwellian(v)
	fields = []
	for _ in range(samples):
		coefficients = rng.normal(size=10)
		monomials = [
			np.ones(velocity.shape),
			v[..., 0],
			v[..., 1],
			v[..., 2],
			v[..., 0] * v[..., 1],
			v[..., 1] * v[..., 2],
			v[..., 0] ** 2 - v[..., 2] ** 2,
			np.sum(v * v, axis=-1),
			v[..., 0] * np.sum(v * v, axis=-1),
			v[..., 2] ** 3,
		]
		fields.append(sum(c * m for c, m in zip(coefficients, monomials)) * root)
	return fields


def coercivity_spotcheck(
	coeffs: CollisionCoefficients,
	samples: int = 12,
	rng: Optional[np.random.Generator] = None,
	extra: Sequence[np.ndarray] = (),
	tolerance: float = 1e-12,
) -> CoercivityReport:
	"""Empirical δ = min ⟨Lg,g⟩/|(I−P)g|²_σ over random polynomial-times-√μ fields."""

	rng = rng or np.random.default_rng(0)
	velocity = coeffs.velocity
	quotients = []
	for g in list(extra) + _sample_fields(velocity, samples, rng):
		micro = project_P(velocity, g).d
		denominator = norms(coeffs, micro).sigma ** 2
		if denominator <= tolerance:
			continue
		numerator = float(np.sum(linearized_operator(coeffs, g) * g)) * velocity.cell_volume
		quotients.append(numerator / denominator)
	chi0 = collision_invariants(velocity.mesh)[..., 0]
	null = abs(float(np.sum(linearized_operator(coeffs, chi0) * chi0)) * velocity.cell_volume)
	delta = min(quotients) if quotients else 0.0
	LOGGER.info("Coercivity spot check: δ=%.4g over %d fields", delta, len(quotients))
	return CoercivityReport(delta=delta, quotients=quotients, null_space_residual=null)


def coercivity_integrated(
	coeffs: CollisionCoefficients,
	grid: PhaseGrid,
	times: Sequence[float],
	fields: Sequence[np.ndarray],
	eta: np.ndarray,
) -> float:
	"""Fitted δ′ in ∫⟨Lf,f⟩ ≥ δ′(∫‖f‖²_σ − {η(t) − η(s)}) over a series."""

	times = np.asarray(times, dtype=float)
	volume = grid.cell_volume
	dissipation = np.array([float(np.sum(linearized_operator(coeffs, np.asarray(f)) * f)) * volume for f in fields])
	sigma_sq = np.array([norms(coeffs, np.asarray(f), x_volume=grid.x_cell_volume).sigma ** 2 for f in fields])
	left = _cumulative(times, dissipation)
	right = _cumulative(times, sigma_sq) - (np.asarray(eta) - eta[0])
	positive = right > 1e-14
	return float(np.min(left[positive] / right[positive])) if np.any(positive) else 0.0


@dataclass
class DecayReport:
	times: np.ndarray
	l2: np.ndarray
	energy: np.ndarray
	energy_constant: float
	monotone: bool
	max_increase: float
	decay_exponent: Optional[float] = None
	extra: Dict[str, float] = field(default_factory=dict)


def decay_monitor(
	coeffs: CollisionCoefficients,
	grid: PhaseGrid,
	times: Sequence[float],
	fields: Sequence[np.ndarray],
	theta: float = 0.0,
	slack: float = 1e-8,
	transient: int = 0,
) -> DecayReport:
	"""Energy boundedness, monotone ‖f(t)‖_{2,ϑ} after ``transient`` outputs and a fitted decay exponent."""

	times = np.asarray(times, dtype=float)
	suites = [norms(coeffs, np.asarray(f), theta, grid.x_cell_volume) for f in fields]
	l2 = np.array([suite.l2 for suite in suites])
	sigma_sq = np.array([suite.sigma**2 for suite in suites])
	energy = l2**2 + _cumulative(times, sigma_sq)
	energy_constant = float(np.max(energy) / energy[0]) if energy[0] > 0 else 0.0
	tail = l2[transient:]
	increases = np.diff(tail)
	max_increase = float(np.max(increases)) if increases.size else 0.0
	monotone = max_increase <= slack
	exponent = None
	usable = (times > 0) & (l2 > 0)
	if np.count_nonzero(usable) >= 3 and l2[0] > 0:
		exponent = float(np.polyfit(np.log1p(times[usable]), np.log(l2[usable] / l2[0]), 1)[0])
	if not monotone:
		LOGGER.warning("L² norm increases by %.3e after the transient", max_increase)
	return DecayReport(
		times=times,
		l2=l2,
		energy=energy,
		energy_constant=energy_constant,
		monotone=monotone,
		max_increase=max_increase,
		decay_exponent=exponent,
	)
