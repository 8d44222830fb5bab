"""Scenario handlers and the batch entry point ``run(config) -> RunReport``."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sympy as sp

from . import __version__
from .characteristics import CharacteristicSystem, jacobian_bound_check
from .coefficients import (
	BackgroundField,
	CollisionCoefficients,
	SphericalRule,
	drift_scaling_ratio,
	eigenvalue_slopes,
	ellipticity_constants,
	kbar_bound,
	sqrt_maxwellian,
)
from .config import InitialDataBlock, RunConfig, config_hash, dump_config, parse_config
from .flatten import (
	coefficient_field,
	extension_boundary_flux,
	interface_continuity_certificate,
	mirror_extend,
	transport_residual,
	validity_depth,
)
from .geometry import BoundaryPatch, DomainSpec, Slab, build_domain, has_rotational_symmetry
from .grid import PhaseGrid, VelocityGrid
from .macro_micro import burnett, coercivity_integrated, coercivity_spotcheck, decay_monitor, gram_matrix, macro_control_report, symbolic_gram
from .persistence import ArtifactStore, DirectoryStore, InMemoryStore, render_csv, write_json
from .plots import interface_svg, margin_svg, norm_decay_svg
from .regularization import BumpKernel, CutoffFamily, cutoff_defect_sweep, q_eps, q_eps_grid
from .report import Provenance, RunReport, compare_runs, make_record
from .runner import Runner
from .scenarios import scenario_graph
from .scheduler import Scheduler
from .solver import (
	PhaseSolver,
	SolveResult,
	SolverSchedule,
	SweepReport,
	adjoint_solve,
	duality_certificate,
	duhamel_layer,
	limit_schedule,
	mild_lipschitz,
	outgoing_trace_norms,
	positivity_margin,
	reflection_sweep,
	trace_lp_bound,
	trace_sup_bound,
)
from .utils import canonical_json, human_readable_duration, setup_logging, stable_hash


LOGGER = logging.getLogger(__name__)
setup_logging()

SUP_TOL = 1e-6
POSITIVITY_TOL = 1e-8
ADJOINT_MIN_TOL = 1e-10
ADJOINT_MAX_TOL = 1e-8
ADJOINT_L1_TOL = 1e-8
DUALITY_TOL = 5e-3
MONOTONE_SLACK = 1e-8
Q_EXACT_TOL = 1e-9
Q_MEAN_TOL = 1e-10
GRAM_TOL = 1e-8
INTERFACE_TOL = 1e-12
BIG_A_TOL = 1e-5
TRANSPORT_ORDER = 1.8
CANCELLATION_TOL = 1e-8
REFINEMENT_GAIN = 2.0
ROUNDOFF = 1e-14
RESIDUAL_FLOOR = 1e-12


# Data ---------------------------------------------------------------------------------


def _bump(r: np.ndarray) -> np.ndarray:
	return np.where(r < 1.0, (1.0 - r * r) ** 2, 0.0)


def initial_datum(grid: PhaseGrid, block: InitialDataBlock, rng: np.random.Generator) -> np.ndarray:
	"""f₀ = amplitude·s(x)·p(v)·√μ with |s|, |p| ≤ 1, so μ + √μ f₀ ≥ 0."""

	if block.kind == "zero":
		return grid.zeros()
	x = grid.x_mesh
	v = grid.velocity.mesh
	period = grid.domain.period
	if block.kind == "mode":
		spatial = np.cos(2.0 * math.pi * block.wavenumber * x[..., 0] / period)
		profile = np.exp(-0.5 * (v[..., 0] - 1.0) ** 2)
	else:
		phases = rng.uniform(0.0, 2.0 * math.pi, 3)
		weights = rng.normal(size=3)
		spatial = sum(
			weights[k] * np.cos(2.0 * math.pi * (k + 1) * x[..., k % 2] / period + phases[k]) for k in range(3)
		) * np.cos(0.5 * math.pi * x[..., 2] / grid.domain.half_width)
		spatial = spatial / max(float(np.max(np.abs(spatial))), 1e-300)
		shift = rng.normal(scale=0.5, size=3)
		profile = np.exp(-0.25 * np.sum((v - shift) ** 2, axis=-1))
	velocity_part = profile * sqrt_maxwellian(v)
	return block.amplitude * spatial[:, :, :, None, None, None] * velocity_part[None, None, None]


def terminal_datum(grid: PhaseGrid, config: RunConfig) -> np.ndarray:
	"""Nonnegative C¹ bump ψ_T supported in a ball of x times a ball of v."""

	block = config.adjoint
	x = grid.x_mesh
	v = grid.velocity.mesh
	rx = np.linalg.norm(x - np.asarray(block.centre_x), axis=-1) / block.radius_x
	rv = np.linalg.norm(v - np.asarray(block.centre_v), axis=-1) / block.radius_v
	return block.amplitude * _bump(rx)[:, :, :, None, None, None] * _bump(rv)[None, None, None]


def flatten_patches(config: RunConfig) -> List[BoundaryPatch]:
	"""Flat, paraboloid and tilted cubic charts, plus the configured graph patch."""

	tilt = config.flatten.tilt
	b = config.flatten.box
	box = (-b, b, -b, b)
	patches = [
		BoundaryPatch(sp.Integer(0), box, name="flat"),
		BoundaryPatch.from_polynomial([[0.0, 0.0, 0.5 * tilt], [0.0, 0.0], [0.5 * tilt]], box, name="paraboloid"),
		BoundaryPatch.from_polynomial([[0.0, 0.3 * tilt, 0.0, 0.1], [tilt, 0.2], [0.25]], box, name="tilted_cubic"),
	]
	if config.domain.kind == "graph_patch":
		table = config.domain.patches[0]
		patches.append(BoundaryPatch.from_polynomial(table["coefficients"], tuple(table["chart_box"]), name="configured"))
	return patches


# Run context --------------------------------------------------------------------------


@dataclass
class RunContext:
	"""Shared state of one run: configuration, store, report and lazily built operators."""

	config: RunConfig
	store: ArtifactStore
	report: RunReport
	run_id: str
	config_hash: str
	_solvers: Dict[str, PhaseSolver] = field(default_factory=dict)
	_sweeps: Dict[str, SweepReport] = field(default_factory=dict)

	def rng(self, stream: str) -> np.random.Generator:
		"""Independent generator per named stream, fixed by the configured seed."""

		return np.random.default_rng(np.random.SeedSequence([self.config.seed, int(stable_hash(stream)[:8], 16)]))

	@cached_property
	def domain(self) -> DomainSpec:
		block = self.config.domain
		return build_domain(block.kind, block.params, block.patches)

	@cached_property
	def slab(self) -> Slab:
		if not isinstance(self.domain, Slab):
			raise ValueError(f"the phase-grid scenarios run on the slab, not '{self.config.domain.kind}'")
		return self.domain

	@cached_property
	def grid(self) -> PhaseGrid:
		block = self.config.grid
		return PhaseGrid.build(self.slab, block.nx, block.nv, block.v_max)

	@cached_property
	def velocity(self) -> VelocityGrid:
		return VelocityGrid(self.config.grid.nv, self.config.grid.v_max)

	@cached_property
	def family(self) -> CutoffFamily:
		return CutoffFamily(self.config.schedule.epsilon)

	@cached_property
	def kernel(self) -> BumpKernel:
		return BumpKernel.build(self.config.quadrature.bump_order)

	@cached_property
	def schedule(self) -> SolverSchedule:
		return self.config.schedule.to_schedule()

	@cached_property
	def coefficients(self) -> CollisionCoefficients:
		quad = self.config.quadrature
		period = self.domain.period if isinstance(self.domain, Slab) else 2.0
		background = BackgroundField(amplitude=self.config.background.amplitude, period=period, wavenumber=self.config.background.wavenumber)
		rule = SphericalRule(radial_order=quad.radial_order, angular_order=quad.angular_order, azimuth_order=quad.azimuth_order)
		return CollisionCoefficients.build(self.velocity, background, rule=rule, backend=quad.backend, self_check=quad.self_check)

	@cached_property
	def initial(self) -> np.ndarray:
		return initial_datum(self.grid, self.config.initial, self.rng("initial"))

	def solver(self, mode: Optional[str] = None) -> PhaseSolver:
		mode = mode or self.schedule.diffusion
		if mode not in self._solvers:
			coeffs = self.coefficients if mode in ("cholesky", "stencil") else None
			self._solvers[mode] = PhaseSolver(
				self.grid, self.family, self.kernel, self.schedule, self.config.schedule.a, coeffs=coeffs, mode=mode
			)
		return self._solvers[mode]

	def sweep(self, mode: Optional[str] = None) -> SweepReport:
		"""Reflection sweep of the configured initial datum, computed once per diffusion mode."""

		mode = mode or self.schedule.diffusion
		if mode not in self._sweeps:
			self._sweeps[mode] = reflection_sweep(self.solver(mode), self.initial)
		return self._sweeps[mode]

	def derived(self, config: RunConfig, suffix: str) -> "RunContext":
		digest = config_hash(config)
		report = RunReport(provenance=Provenance(config_hash=digest, code_version=__version__, seed=config.seed, scenario=config.scenario))
		return RunContext(config=config, store=InMemoryStore(), report=report, run_id=f"{self.run_id}-{suffix}", config_hash=digest)

	@cached_property
	def resolution_pair(self) -> Tuple["RunContext", "RunContext"]:
		"""(coarse, fine) contexts a factor two apart in nx, nv and dt; this run is one of the two.

		The companion is the coarsened run when every count halves to a valid grid,
		otherwise the refined one.
		"""

		block = self.config.grid
		coarsen = all(n % 2 == 0 for n in block.nx) and block.nx[2] >= 4 and block.nv % 4 == 0 and block.nv >= 8
		factor = 0.5 if coarsen else 2.0
		payload = self.config.model_dump(mode="json")
		payload["grid"]["nx"] = [int(n * factor) for n in block.nx]
		payload["grid"]["nv"] = int(block.nv * factor)
		payload["schedule"]["dt"] = self.solver("laplacian").plan.dt / factor
		companion = self.derived(parse_config(payload), "coarse" if coarsen else "refined")
		LOGGER.info(
			"Resolution companion %s: nx %s, nv %d, dt %.3e",
			companion.run_id,
			companion.config.grid.nx,
			companion.config.grid.nv,
			companion.config.schedule.dt,
		)
		return (companion, self) if coarsen else (self, companion)

	# Outputs ------------------------------------------------------------------------
	def record(
		self,
		scenario: str,
		name: str,
		reference: str,
		measured: float,
		threshold: Optional[float] = None,
		sense: str = "le",
		asserted: bool = True,
	) -> None:
		self.report.add(make_record(name, scenario, reference, measured, threshold, sense, asserted))

	def write_text(self, name: str, text: str) -> None:
		self.store.write_text(name, text)
		self.report.provenance.artifacts[name] = stable_hash(text)

	def write_csv(self, name: str, columns: Sequence[str], rows: Sequence[Mapping[str, float]]) -> None:
		self.write_text(name, render_csv(columns, rows, self.config_hash))

	def write_checkpoint(self, name: str, arrays: Mapping[str, np.ndarray], attrs: Mapping[str, Any]) -> None:
		self.store.write_checkpoint(name, arrays, {**attrs, "config_hash": self.config_hash})
		self.report.provenance.artifacts[name] = stable_hash({key: np.asarray(value).tobytes().hex() for key, value in arrays.items()})


# Scenario handlers --------------------------------------------------------------------


def _series(result: SolveResult) -> List[np.ndarray]:
	return [item.values for item in result.fields]


def _norm_ratios(grid: PhaseGrid, f0: np.ndarray, result: SolveResult) -> Tuple[float, float]:
	"""max_t ‖F(t)‖∞/‖f₀‖∞ and max_t ‖F(t)‖₁/‖f₀‖₁."""

	sup0 = float(np.max(np.abs(f0)))
	l1_0 = float(np.sum(np.abs(f0)) * grid.cell_volume)
	sup_ratio = max(item.sup() for item in result.fields) / sup0 if sup0 else 0.0
	l1_ratio = max(item.l1(grid) for item in result.fields) / l1_0 if l1_0 else 0.0
	return sup_ratio, l1_ratio


def _refinement_ratio(coarse: float, fine: float) -> float:
	"""Residual gain from one refinement; two residuals at roundoff count as a full gain."""

	if max(coarse, fine) <= RESIDUAL_FLOOR:
		return REFINEMENT_GAIN
	return coarse / max(fine, ROUNDOFF)


def _stability(first: float, second: float) -> float:
	ratio = max(first, ROUNDOFF) / max(second, ROUNDOFF)
	return max(ratio, 1.0 / ratio)


def _mode_report(ctx: RunContext, mode: str) -> RunReport:
	sweep = ctx.sweep(mode)
	sup_ratio, l1_ratio = _norm_ratios(ctx.grid, ctx.initial, sweep.result)
	report = RunReport(provenance=Provenance(config_hash=ctx.config_hash, code_version=__version__, seed=ctx.config.seed, scenario="solve"))
	report.add(make_record("max_principle", "solve", "max_t ‖F(t)‖∞/‖f₀‖∞", sup_ratio, 1.0 + SUP_TOL))
	report.add(make_record("l1_ratio", "solve", "max_t ‖F(t)‖₁/‖f₀‖₁", l1_ratio, asserted=False))
	report.add(make_record("mass_drift", "solve", "|∬f√μ(T) − ∬f√μ(0)|", sweep.result.rows[-1]["mass_drift"], asserted=False))
	report.add(make_record("boundary_residual", "solve", "∫|γ₋f − R[γ₊f]|", sweep.boundary_residual, asserted=False))
	return report


def run_solve(ctx: RunContext) -> Dict[str, Any]:
	"""Forward reflection sweep with the maximum principle, L¹, trace and positivity records.

	L¹ contraction is asserted on the laplacian-mode sweep (or the transport-only
	sweep in ``off`` mode) and reported for the configured mode. The cholesky and
	stencil sweeps are compared field by field.
	"""

	scenario = "solve"
	grid = ctx.grid
	block = ctx.config.schedule
	solver = ctx.solver()
	f0 = ctx.initial
	sweep = ctx.sweep()
	result = sweep.result
	ctx.store.put_artifact("solve", result)

	sup0 = float(np.max(np.abs(f0)))
	sup_ratio, l1_ratio = _norm_ratios(grid, f0, result)
	ctx.record(scenario, "max_principle", "max_t ‖F(t)‖∞/‖f₀‖∞", sup_ratio, 1.0 + SUP_TOL)
	l1_mode = solver.mode if solver.mode in ("laplacian", "off") else "laplacian"
	_, l1_checked = _norm_ratios(grid, f0, ctx.sweep(l1_mode).result)
	ctx.record(scenario, "l1_contraction", f"max_t ‖F(t)‖₁/‖f₀‖₁ in {l1_mode} mode", l1_checked, 1.0 + SUP_TOL)
	ctx.record(scenario, "l1_ratio_configured_mode", f"max_t ‖F(t)‖₁/‖f₀‖₁ in {solver.mode} mode", l1_ratio, asserted=False)
	ctx.record(scenario, "positivity", "min μ + √μ f over the run", positivity_margin(grid, result.fields), -POSITIVITY_TOL, sense="ge")

	horizon = result.dt * solver.plan.steps
	trace_sup, _ = outgoing_trace_norms(grid, result, 1.0)
	sup_bound = trace_sup_bound(block.epsilon, horizon, sup0)
	ctx.record(scenario, "trace_sup_bound", "outgoing trace sup / e^{4T/ε²}‖f₀‖∞", trace_sup / sup_bound if sup_bound else 0.0, 1.0)
	for p in (1, 2):
		_, trace_lp = outgoing_trace_norms(grid, result, float(p))
		f0_norm = float(np.sum(np.abs(f0) ** p) * grid.cell_volume) ** (1.0 / p)
		bound = trace_lp_bound(float(p), sweep.iterations, block.a, block.epsilon, horizon, f0_norm)
		ctx.record(scenario, f"trace_l{p}_bound", f"outgoing trace L{p} / its reflection-sum bound", trace_lp / bound if bound else 0.0, 1.0)

	lipschitz = mild_lipschitz(solver, pairs=block.lipschitz_pairs, rng=ctx.rng("lipschitz"))
	contraction = 4.0 * solver.plan.dt / block.epsilon**2
	ctx.record(scenario, "fixed_point_contraction", "Lipschitz ratio of the mild map vs 4T₁/ε²", lipschitz, contraction + 1e-10)
	ctx.record(scenario, "reflection_mismatch", "last boundary mismatch of the reflection sweep", sweep.mismatches[-1] if sweep.mismatches else 0.0, asserted=False)
	ctx.record(scenario, "reflection_monotone", "reflection mismatch decreasing", float(sweep.monotone), asserted=False)
	ctx.record(scenario, "boundary_residual", "∫|γ₋f − R[γ₊f]|", sweep.boundary_residual, asserted=False)
	ctx.record(scenario, "mass_drift", "|∬f√μ(T) − ∬f√μ(0)|", result.rows[-1]["mass_drift"], asserted=False)

	cholesky, stencil = _mode_report(ctx, "cholesky"), _mode_report(ctx, "stencil")
	finals = (ctx.sweep("cholesky").result.final.values, ctx.sweep("stencil").result.final.values)
	differences = compare_runs(cholesky, stencil, fields=finals)
	field_gap = next((row["b"] for row in differences if row["name"] == "field_sup_difference"), 0.0)
	ctx.record(scenario, "diffusion_mode_difference", "sup |F_cholesky(T) − F_stencil(T)| / ‖f₀‖∞", field_gap / sup0 if sup0 else field_gap, asserted=False)
	ctx.write_text(
		"diffusion_modes.json",
		canonical_json({"cholesky": cholesky.summary_rows(), "stencil": stencil.summary_rows(), "differences": differences}),
	)

	columns = list(result.rows[0].keys())
	ctx.write_csv("solve_series.csv", columns, result.rows)
	ctx.write_csv("reflection.csv", ["n", "mismatch"], [{"n": n + 2, "mismatch": gap} for n, gap in enumerate(sweep.mismatches)])
	ctx.write_text("solve_norms.svg", norm_decay_svg(result.rows))
	ctx.write_checkpoint("solve_final.h5", {"f0": f0, "f": result.final.values}, {"t": result.final.time, "mode": solver.mode})
	if block.run_limit_schedule:
		rows = limit_schedule(grid, f0, ctx.kernel, ctx.schedule, coeffs=ctx.coefficients)
		ctx.write_csv("limit_schedule.csv", ["epsilon", "a", "iterations", "mismatch", "boundary_residual"], rows)
	return {"steps": solver.plan.steps, "iterations": sweep.iterations, "capped": solver.plan.capped}


def run_adjoint(ctx: RunContext) -> Dict[str, Any]:
	"""Backward adjoint solve from a compatible ψ_T with its maximum principle and L¹ records."""

	scenario = "adjoint"
	grid = ctx.grid
	solver = ctx.solver("laplacian")
	psi_T = terminal_datum(grid, ctx.config)
	backward = adjoint_solve(solver, psi_T)
	ctx.store.put_artifact("adjoint", backward)

	top = float(np.max(np.abs(psi_T)))
	minimum = min(float(np.min(item.values)) for item in backward.fields)
	peak = max(item.sup() for item in backward.fields)
	ctx.record(scenario, "adjoint_minimum", "min ψ over the backward run", minimum, -ADJOINT_MIN_TOL, sense="ge")
	ctx.record(scenario, "adjoint_max_principle", "(max|ψ| − max|ψ_T|)/max|ψ_T|", (peak - top) / top if top else 0.0, ADJOINT_MAX_TOL)
	l1_gain = grid.integrate(backward.fields[-1].values) - grid.integrate(backward.fields[0].values)
	ctx.record(scenario, "adjoint_l1", "∬ψ(0) − ∬ψ(T)", l1_gain, ADJOINT_L1_TOL)
	ctx.write_csv("adjoint_series.csv", list(backward.rows[0].keys()), backward.rows)
	return {"steps": solver.plan.steps}


def _duality_residual(ctx: RunContext, backward: Optional[SolveResult] = None) -> float:
	if backward is None:
		backward = adjoint_solve(ctx.solver("laplacian"), terminal_datum(ctx.grid, ctx.config))
	return duality_certificate(ctx.grid, ctx.sweep("laplacian").result, backward)


def run_duality(ctx: RunContext) -> Dict[str, Any]:
	"""Normalized |∬F(t)ψ(t) − ∬f₀ψ(0)| between the laplacian-mode forward and adjoint runs.

	With ``refinement_checks`` the pairing is repeated one factor two away in
	nx, nv and dt, and the residual must shrink at least by that factor.
	"""

	scenario = "duality"
	residual = _duality_residual(ctx, ctx.store.get_artifact("adjoint"))
	ctx.record(scenario, "duality_residual", "normalized |∬F(t)ψ(t) − ∬f₀ψ(0)|", residual, DUALITY_TOL)
	if not ctx.config.schedule.refinement_checks:
		return {"residual": residual}

	coarse, fine = ctx.resolution_pair
	other = _duality_residual(coarse if fine is ctx else fine)
	coarse_residual, fine_residual = (other, residual) if fine is ctx else (residual, other)
	ratio = _refinement_ratio(coarse_residual, fine_residual)
	ctx.record(scenario, "duality_residual_coarse", "duality residual of the coarse pairing", coarse_residual, asserted=False)
	ctx.record(scenario, "duality_residual_fine", "duality residual of the fine pairing", fine_residual, asserted=False)
	ctx.record(scenario, "duality_refinement_ratio", "coarse/fine duality residual under (nx, nv, dt) refinement", ratio, REFINEMENT_GAIN, sense="ge")
	return {"residual": residual, "refinement_ratio": ratio}


def run_macro(ctx: RunContext) -> Dict[str, Any]:
	"""Macroscopic control on three initial data, plus coercivity spot checks.

	C is fitted once on the configured datum; the other data, and with
	``refinement_checks`` the companion resolution, are held to that fixed C.
	"""

	scenario = "macro"
	grid = ctx.grid
	coeffs = ctx.coefficients
	first = ctx.store.get_artifact("solve")
	variants = [
		InitialDataBlock(kind="mode", amplitude=ctx.config.initial.amplitude, wavenumber=ctx.config.initial.wavenumber + 1),
		InitialDataBlock(kind="random", amplitude=ctx.config.initial.amplitude),
	]
	series = [first] + [reflection_sweep(ctx.solver(), initial_datum(grid, block, ctx.rng(f"macro-{k}"))).result for k, block in enumerate(variants)]

	constant: Optional[float] = None
	fitted = []
	for k, result in enumerate(series):
		control = macro_control_report(coeffs, grid, result.times, _series(result), constant=constant)
		constant = control.constant
		fitted.append(control.fitted)
		scale = max(1.0, float(np.max(np.abs(control.lhs))))
		ctx.record(scenario, f"macro_inequality_{k}", "min_t RHS − LHS with the C fitted on datum 0", control.margin, -1e-10 * scale, sense="ge")
		ctx.record(scenario, f"macro_constant_{k}", "C fitted on this datum alone", control.fitted, asserted=False)
		if k == 0:
			for name, ratio in sorted(control.potential_ratios.items()):
				ctx.record(scenario, f"potential_ratio_{name}", "fitted H¹ bound of the time-derivative potential", ratio, asserted=False)
			ctx.record(scenario, "specular_cancellation", "∫ψ_c f v·n over the walls with the specular incoming half", control.boundary_cancellation, CANCELLATION_TOL)
			ctx.record(scenario, "eta_constant", "max |η(t)|/‖f(t)‖²₂", control.eta_constant, asserted=False)
			rows = [{"t": t, "lhs": lhs, "rhs": rhs, "eta": eta} for t, lhs, rhs, eta in zip(control.times, control.lhs, control.rhs, control.eta)]
			ctx.write_csv("macro_margins.csv", ["t", "lhs", "rhs", "eta"], rows)
			ctx.write_text("macro_margins.svg", margin_svg(control.times, control.lhs, control.rhs))
			integrated = coercivity_integrated(coeffs, grid, control.times, _series(result), control.eta)
			ctx.record(scenario, "coercivity_integrated", "fitted δ′ of the integrated coercivity", integrated, asserted=False)
	positive = [c for c in fitted if c > 0]
	spread = max(positive) / min(positive) if positive else 1.0
	ctx.record(scenario, "macro_constant_spread", "max/min fitted C over the initial data", spread, asserted=False)

	if ctx.config.schedule.refinement_checks:
		coarse, fine = ctx.resolution_pair
		base = macro_control_report(coarse.coefficients, coarse.grid, coarse.sweep().result.times, _series(coarse.sweep().result))
		check = macro_control_report(fine.coefficients, fine.grid, fine.sweep().result.times, _series(fine.sweep().result), constant=base.constant)
		scale = max(1.0, float(np.max(np.abs(check.lhs))))
		ctx.record(scenario, "macro_inequality_refined", "min_t RHS − LHS on the fine grid with the coarse C", check.margin, -1e-10 * scale, sense="ge")
		ctx.record(scenario, "macro_constant_stability", "max(r, 1/r) for r = fine/coarse fitted C", _stability(check.fitted, base.fitted), REFINEMENT_GAIN)

	coercivity = coercivity_spotcheck(coeffs, rng=ctx.rng("coercivity"))
	ctx.record(scenario, "coercivity_delta", "min ⟨Lg,g⟩/|(I−P)g|²_σ", coercivity.delta, 0.0, sense="ge")
	ctx.record(scenario, "null_space_residual", "|⟨Lχ₀, χ₀⟩|", coercivity.null_space_residual, asserted=False)
	return {"constants": fitted}


def run_decay(ctx: RunContext) -> Dict[str, Any]:
	"""Monotone L² decay of the forward run and the Duhamel linear layer."""

	scenario = "decay"
	grid = ctx.grid
	coeffs = ctx.coefficients
	result = ctx.store.get_artifact("solve")
	monitor = decay_monitor(coeffs, grid, result.times, _series(result), theta=ctx.config.schedule.norm_theta, slack=MONOTONE_SLACK)
	ctx.record(
		scenario,
		"l2_monotone",
		"max increase of ‖f(t)‖₂",
		monitor.max_increase,
		MONOTONE_SLACK,
		asserted=coeffs.background.is_zero,
	)
	ctx.record(scenario, "energy_constant", "max E(t)/E(0)", monitor.energy_constant, asserted=False)
	ctx.record(scenario, "decay_exponent", "fitted log-log slope of ‖f(t)‖₂", monitor.decay_exponent or 0.0, asserted=False)

	solver = ctx.solver()
	layer = duhamel_layer(solver if solver.coeffs is not None else ctx.solver("cholesky"), ctx.initial)
	initial_l2 = layer.fields[0].l2(grid)
	ctx.record(scenario, "duhamel_l2_ratio", "‖f̄(T)‖₂/‖f̄₀‖₂ of the linear layer", layer.final.l2(grid) / initial_l2 if initial_l2 else 0.0, asserted=False)
	rows = [{"t": t, "l2": l2, "energy": energy} for t, l2, energy in zip(monitor.times, monitor.l2, monitor.energy)]
	ctx.write_csv("decay.csv", ["t", "l2", "energy"], rows)
	return {"monotone": monitor.monotone}


def _transport_order(patch: BoundaryPatch, steps: Sequence[float], rng: np.random.Generator) -> Optional[float]:
	depth = min(validity_depth(patch), 0.2)
	lo1, hi1, lo2, hi2 = patch.chart_box
	count = 64
	y = np.stack([rng.uniform(lo1, hi1, count), rng.uniform(lo2, hi2, count), rng.uniform(-0.5 * depth, 0.0, count)], axis=-1)
	w = rng.normal(size=(count, 3))
	smooth = lambda x, v: np.sin(x[..., 0] + 0.5 * x[..., 2]) * np.cos(x[..., 1]) * np.exp(-0.25 * np.sum(v * v, axis=-1)) * (1.0 + v[..., 2])
	residuals = np.array([transport_residual(patch, smooth, y, w, h) for h in steps])
	if residuals[0] < 1e-10:
		return None
	return float(np.polyfit(np.log(steps), np.log(np.maximum(residuals, 1e-300)), 1)[0])


def _extension_flux(rng: np.random.Generator) -> float:
	velocity = VelocityGrid(8, 4.0)
	w = velocity.mesh
	h = 0.1
	y3 = -(np.arange(4) + 0.5) * h
	weight = np.exp(-0.5 * np.sum(w * w, axis=-1))
	tilt = rng.normal(size=2)
	tilde_f = weight[None] * (1.0 + tilt[0] * y3[:, None, None, None] + tilt[1] * y3[:, None, None, None] * w[None, ..., 2])
	extended = mirror_extend(tilde_f, h)
	phi = np.exp(-np.sum(w * w, axis=-1)) * (1.0 + w[..., 2] ** 2)
	return abs(extension_boundary_flux(extended, phi, w[..., 2], velocity.cell_volume)["sum"])


def run_flatten(ctx: RunContext) -> Dict[str, Any]:
	"""Interface certificates of the flattening on three patch geometries."""

	scenario = "flatten"
	config = ctx.config.flatten
	field_fn = coefficient_field(ctx.coefficients)
	patches = flatten_patches(ctx.config)
	certificates = []
	orders = []
	rows = []
	for index, patch in enumerate(patches):
		certificate = interface_continuity_certificate(patch, field_fn, samples=config.samples, rng=ctx.rng(f"interface-{patch.name}"))
		certificates.append(certificate)
		for offset, a_jump, b_jump in zip(certificate.offsets, certificate.big_a_jumps, certificate.big_b_jumps):
			rows.append({"patch": index, "offset": offset, "a_jump": a_jump, "b_jump": b_jump})
		order = _transport_order(patch, config.refinement_steps, ctx.rng(f"transport-{patch.name}"))
		if order is not None:
			orders.append(order)

	worst = lambda name: max(float(getattr(item, name)) for item in certificates)
	ctx.record(scenario, "specular_commutation", "max |A⁻¹Rw − R_x A⁻¹w| on the interface", worst("commutation"), INTERFACE_TOL)
	ctx.record(scenario, "c_cross_entries", "max |c₁₃|, |c₂₃| at y₃ = 0", worst("c_cross"), INTERFACE_TOL)
	ctx.record(scenario, "a_continuity", "max |A(y) − A(Ry)| across the interface", worst("a_continuity"), INTERFACE_TOL)
	ctx.record(scenario, "lambda_parity", "max |λ(w) − λ(Rw)| at y₃ = 0", worst("lambda_parity"), 1e-10)
	ctx.record(scenario, "lambda_inverse_parity", "max |RC⁻¹R − C⁻¹| at y₃ = 0", worst("lambda_inverse"), 1e-10)
	ctx.record(scenario, "cofactor_inverse", "max |adj(A⁻¹)/det − A|", worst("cofactor"), 1e-10)
	ctx.record(scenario, "big_a_jump", "one-sided 𝔸 jump extrapolated to the interface", worst("big_a_extrapolated"), BIG_A_TOL)
	ctx.record(scenario, "big_b_jump", "𝔹 jump at the smallest offset", max(item.big_b_jumps[-1] for item in certificates), asserted=False)
	ctx.record(scenario, "big_a_min_eigenvalue", "min eigenvalue of 𝔸 near the interface", min(item.min_eigenvalue for item in certificates), 0.0, sense="ge")
	ctx.record(scenario, "transport_order", "observed order of the transport-invariance residual", min(orders) if orders else 2.0, TRANSPORT_ORDER, sense="ge")
	ctx.record(scenario, "extension_flux", "|sum of both sides of ∫f̄φ dγ̃|", _extension_flux(ctx.rng("extension")), INTERFACE_TOL)

	ctx.write_csv("flatten_interface.csv", ["patch", "offset", "a_jump", "b_jump"], rows)
	offsets = list(certificates[0].offsets)
	a_jumps = [max(item.big_a_jumps[k] for item in certificates) for k in range(len(offsets))]
	b_jumps = [max(item.big_b_jumps[k] for item in certificates) for k in range(len(offsets))]
	ctx.write_text("flatten_interface.svg", interface_svg(offsets, a_jumps, b_jumps))
	return {"patches": [patch.name for patch in patches]}


def _anchors(domain: DomainSpec, count: int, horizon: float, rng: np.random.Generator) -> List[tuple]:
	boundary = domain.sample_boundary(count, rng)
	normal = domain.outward_normal_field(boundary)
	depth = rng.uniform(0.05, 1.5, count) * domain.delta0
	x = boundary - depth[:, None] * normal
	v = rng.normal(size=(count, 3))
	t = rng.uniform(0.1 * horizon, horizon, count)
	return [(float(t[k]), x[k], v[k]) for k in range(count)]


def run_geometry(ctx: RunContext) -> Dict[str, Any]:
	"""Domain, cutoff, characteristics, Q^ε and velocity-space coefficient checks."""

	scenario = "geometry"
	domain = ctx.domain
	domain.validate(rng=ctx.rng("domain"))
	family = ctx.family
	ctx.record(scenario, "cutoff_defect", "max |W_ε| on the grazing neighborhood", cutoff_defect_sweep(family, domain, rng=ctx.rng("cutoff")), 1e-10)
	if domain.symmetry_axis is not None:
		_, residual = has_rotational_symmetry(domain, *domain.symmetry_axis, rng=ctx.rng("symmetry"))
		ctx.record(scenario, "rotational_symmetry", "max |((x−x0)×ω)·n| on ∂Ω", residual, 1e-10)

	system = CharacteristicSystem(family, domain)
	check = jacobian_bound_check(system, _anchors(domain, ctx.config.schedule.jacobian_anchors, ctx.config.schedule.T, ctx.rng("anchors")))
	ctx.record(scenario, "jacobian_bounds", "max |log J| − C(1+ε³)|t−s|", check["max_excess"], 1e-12)
	ctx.record(scenario, "jacobian_anchor", "J(t) = 1 at every anchor", check["anchored_at_one"], 1.0, sense="ge")

	rng = ctx.rng("q-eps")
	matrix = rng.normal(size=(3, 3))
	matrix = 0.5 * (matrix + matrix.T)
	linear = rng.normal(size=3)
	quadratic = lambda v: np.einsum("...i,ij,...j->...", v, matrix, v) + v @ linear + 1.0
	points = rng.uniform(-2.0, 2.0, (64, 3))
	exactness = float(np.max(np.abs(q_eps(family, ctx.kernel, quadratic, points) - 2.0 * np.trace(matrix))))
	ctx.record(scenario, "q_eps_exactness", "max |Q^ε p − Δp| for a quadratic p", exactness, Q_EXACT_TOL)
	velocity = ctx.velocity
	psi = np.exp(-np.sum((velocity.mesh - rng.normal(scale=0.5, size=3)) ** 2, axis=-1))
	adjoint = q_eps_grid(psi, ctx.kernel, family.epsilon, velocity.h, adjoint=True)
	ctx.record(scenario, "q_eps_adjoint_mean", "|Σ Q̄^εψ| / ‖ψ‖₁", abs(float(np.sum(adjoint))) / float(np.sum(np.abs(psi))), Q_MEAN_TOL)

	gram = gram_matrix(velocity)
	ctx.record(scenario, "gram_orthonormality", "max |⟨χ_j, χ_k⟩ − δ_jk|", float(np.max(np.abs(gram - np.eye(5)))), GRAM_TOL)
	exact = symbolic_gram()
	defects = list(exact["chi"] - sp.eye(5)) + list(exact["A"] - sp.eye(3)) + list(exact["A_chi"])
	oracle = max(abs(float(item)) for item in defects)
	ctx.record(scenario, "gaussian_moment_oracle", "exact Gram defects of χ_k and A_j", oracle, 1e-14)
	burnett_norms = [float(np.sum(burnett("A", (j,), velocity.mesh) ** 2)) * velocity.cell_volume for j in range(3)]
	ctx.record(scenario, "burnett_normalization", "max |⟨A_j, A_j⟩ − 1|", max(abs(value - 1.0) for value in burnett_norms), GRAM_TOL)

	coeffs = ctx.coefficients
	lower, upper = ellipticity_constants(coeffs)
	ctx.record(scenario, "ellipticity_lower", "c₁ with c₁(1+|v|)⁻³ ≤ eig σ_μ", lower, 0.0, sense="ge")
	ctx.record(scenario, "ellipticity_upper", "c₂ with eig σ_μ ≤ c₂(1+|v|)⁻¹", upper, asserted=False)
	slopes = eigenvalue_slopes(np.linspace(5.0, 20.0, 16))
	ctx.record(scenario, "eigenvalue_slope_min", "log-log slope of the smallest σ_μ eigenvalue", slopes[0], asserted=False)
	ctx.record(scenario, "eigenvalue_slope_max", "log-log slope of the largest σ_μ eigenvalue", slopes[1], asserted=False)
	ctx.record(scenario, "kbar_bound", "max ‖K̄_g f‖∞/‖f‖∞", kbar_bound(coeffs, rng=ctx.rng("kbar")), asserted=False)
	ctx.record(scenario, "drift_scaling", "‖a_{g/2}‖∞/‖a_g‖∞", drift_scaling_ratio(coeffs), asserted=False)
	return {"domain": ctx.config.domain.kind}


# Entry point --------------------------------------------------------------------------


def run(config: RunConfig, store: Optional[ArtifactStore] = None, run_id: Optional[str] = None) -> RunReport:
	"""Execute the configured scenario graph and write the report."""

	started = time.monotonic()
	store = store if store is not None else DirectoryStore(config.output_dir)
	digest = config_hash(config)
	run_id = run_id or f"run-{digest[:12]}"
	report = RunReport(
		provenance=Provenance(config_hash=digest, code_version=__version__, seed=config.seed, scenario=config.scenario)
	)
	ctx = RunContext(config=config, store=store, report=report, run_id=run_id, config_hash=digest)
	ctx.write_text("config.yaml", dump_config(config))

	graph = scenario_graph(config.scenario)
	Scheduler(store).schedule_graph(graph, run_id)
	Runner(store, ctx).run()
	for task_id in graph.topological_sort():
		report.scenarios[task_id] = store.get_task_status(f"{run_id}:{task_id}").get("status", "skipped")

	report.provenance.wall_time = time.monotonic() - started
	write_json(store, "report.json", report.model_dump(mode="python"))
	LOGGER.info(
		"Run %s finished in %s: %s (%d properties, failures: %s)",
		run_id,
		human_readable_duration(report.provenance.wall_time),
		report.verdict,
		len(report.properties),
		", ".join(report.failures) or "none",
	)
	return report
