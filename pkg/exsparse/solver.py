"""Fully-corrective conditional gradient over extremal atoms, and Carathéodory pruning."""

import dataclasses
import logging
import time
from dataclasses import dataclass
from typing import Any, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from exsparse.atom_families import family_for
from exsparse.atoms_base import Atom, SparseSolution
from exsparse.certificate import CertificateReport, certificate_grid, certify
from exsparse.core_model import (
    NullSpaceProjector,
    ProblemSpec,
    dim_quotient,
    dual_vector,
    fidelity_conjugate,
    objective,
)
from exsparse.errors import (
    MalformedSpec,
    MaxItersExceeded,
    NonSaturatedAtoms,
    NumericalRankAmbiguity,
    ProblemFileError,
)
from exsparse.weights import WeightProblem

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

SATURATION_TOL = 1e-6
KERNEL_RANK_TOL = 1e-9
KERNEL_ENTRY_TOL = 1e-12
FINE_GRID_FACTOR = 10


@dataclass(frozen=True)
class SolverOptions:
    gap_tol: float = 1e-7
    max_iters: int = 500
    lmo_grid: int = 1024
    refine_iters: int = 40
    prune_tol: float = 1e-10
    subproblem_tol: float = 1e-12
    subproblem_max_iters: int = 20000

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise MalformedSpec(f"solver option {f.name} must be positive, got {value}")
        if self.lmo_grid < 2:
            raise MalformedSpec(f"solver option lmo_grid must be at least 2, got {self.lmo_grid}")

    def with_overrides(self, overrides: Mapping[str, Any]) -> "SolverOptions":
        names = {f.name: f.type for f in dataclasses.fields(self)}
        values = {}
        for key, value in overrides.items():
            if key not in names:
                raise ProblemFileError("unknown solver option", key=f"solver.{key}")
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ProblemFileError(f"expected a number, got {value!r}", key=f"solver.{key}")
            values[key] = int(value) if names[key] in (int, "int") else float(value)
        return dataclasses.replace(self, **values)


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    objective: float
    gap: float
    atoms: int


@dataclass(frozen=True)
class SolverReport:
    objective: float
    gap: float
    dual_value: float
    iterations: int
    p: int
    dim_hn: int
    trace: Tuple[TraceEntry, ...]
    wall_time: float
    converged: bool
    certified: bool
    warnings: Tuple[str, ...] = ()


def fully_corrective_subproblem(
    spec: ProblemSpec,
    atoms: Sequence[Atom],
    opts: Optional[SolverOptions] = None,
    warm_start: Optional[Sequence[float]] = None,
) -> SparseSolution:
    """Re-optimize all weights γ >= 0 and the free null coefficients β for fixed atoms.

    β is eliminated exactly (β = B⁺(y - Kγ)). Atoms whose weight ends at or
    below `prune_tol` are dropped from the returned solution.
    """
    opts = opts or SolverOptions()
    family = family_for(spec)
    projector = NullSpaceProjector.for_spec(spec)
    y = spec.y
    atoms = list(atoms)
    unit = SparseSolution.build([(atom, 1.0) for atom in atoms])
    family.check_distinct(unit)
    K = family.signed_images(unit)

    if atoms:
        problem = WeightProblem(projector.project(K), projector.project(y), spec.lam)
        start = np.zeros(len(atoms)) if warm_start is None else np.asarray(warm_start, dtype=float)
        tol = opts.subproblem_tol * (1.0 + spec.lam * float(np.linalg.norm(y)))
        gamma, converged = problem.solve(start, tol, opts.subproblem_max_iters)
    else:
        gamma, converged = np.zeros(0), True

    keep = gamma > opts.prune_tol
    kept_atoms = [atom for atom, flag in zip(atoms, keep) if flag]
    gamma = gamma[keep]
    beta = projector.fit(y - K[:, keep] @ gamma)
    solution = SparseSolution.build(list(zip(kept_atoms, gamma)), beta)
    if not converged:
        raise MaxItersExceeded(
            f"subproblem did not reach projected-gradient tolerance in "
            f"{opts.subproblem_max_iters} iterations",
            best=solution,
        )
    return solution


def lmo(spec: ProblemSpec, w: Any, opts: Optional[SolverOptions] = None) -> Tuple[Atom, float]:
    """Atom maximizing |⟨w, A atom⟩| and the attained value M >= 0."""
    opts = opts or SolverOptions()
    family = family_for(spec)
    w = np.asarray(w, dtype=float)
    param, sign, value = family.best_peak(w, family.parameter_grid(opts.lmo_grid), opts.refine_iters)
    return family.make_atom(param, sign), value


def dual_value(spec: ProblemSpec, w: FloatArray) -> float:
    """-F*(-w) = ⟨w, y⟩ - ‖w‖²/(2λ) for a dual-feasible w."""
    return -fidelity_conjugate(spec, -np.asarray(w, dtype=float))


def duality_gap(
    spec: ProblemSpec,
    solution: SparseSolution,
    w: Any,
    opts: Optional[SolverOptions] = None,
    sup_value: Optional[float] = None,
) -> float:
    """J(ū) + F*(-w/M) with M = max(1, sup correlation), so w/M is dual-feasible."""
    w = np.asarray(w, dtype=float)
    if sup_value is None:
        _, sup_value = lmo(spec, w, opts)
    scaled = w / max(1.0, sup_value)
    return objective(spec, solution) - dual_value(spec, scaled)


def _merged(spec: ProblemSpec, solution: SparseSolution) -> SparseSolution:
    items = family_for(spec).merge(solution.atoms)
    if len(items) == solution.p:
        return solution
    projector = NullSpaceProjector.for_spec(spec)
    merged = SparseSolution.build(items)
    K = family_for(spec).signed_images(merged)
    beta = projector.fit(spec.y - K @ merged.weights)
    return SparseSolution.build(items, beta)


def caratheodory_prune(
    spec: ProblemSpec,
    solution: SparseSolution,
    w: Any,
    opts: Optional[SolverOptions] = None,
    require_saturation: bool = True,
) -> SparseSolution:
    """Reduce the atom count to dim H_N while keeping Σγ and P_⊥(Kγ) fixed.

    Each step moves γ along a direction c with P_⊥K c = 0 and Σ c = 0 until
    one weight reaches zero. With saturated atoms (⟨w, A u_i⟩ = 1) the ones row
    lies in the row space of P_⊥K, which is what brings the count down to
    dim H_N; without saturation only dim H_N + 1 is reachable.
    """
    opts = opts or SolverOptions()
    family = family_for(spec)
    projector = NullSpaceProjector.for_spec(spec)
    w = np.asarray(w, dtype=float)
    solution = _merged(spec, solution)
    dim_hn = dim_quotient(spec)
    if solution.p <= dim_hn:
        return solution

    K = family.signed_images(solution)
    if require_saturation:
        correlations = w @ K
        off = np.abs(correlations - 1.0)
        if np.any(off > SATURATION_TOL):
            raise NonSaturatedAtoms(
                f"{int(np.sum(off > SATURATION_TOL))} atom(s) miss the certificate "
                f"hyperplane by up to {np.max(off):.3g}"
            )
    target = dim_hn if require_saturation else dim_hn + 1
    if solution.p <= target:
        return solution

    atoms = [atom for atom, _ in solution.atoms]
    gamma = solution.weights
    Kp = projector.project(K)
    while len(atoms) > target:
        try:
            direction = _kernel_direction(Kp)
        except NumericalRankAmbiguity as e:
            if len(atoms) == solution.p:
                raise
            logger.info(f"pruning stopped at {len(atoms)} of {solution.p} atoms: {e}")
            break
        negative = direction < 0
        ratios = np.full(len(atoms), np.inf)
        ratios[negative] = gamma[negative] / -direction[negative]
        leaving = int(np.argmin(ratios))
        gamma = gamma + ratios[leaving] * direction
        gamma[leaving] = 0.0
        keep = gamma > 0
        atoms = [atom for atom, flag in zip(atoms, keep) if flag]
        gamma = gamma[keep]
        Kp = Kp[:, keep]
        K = K[:, keep]

    beta = projector.fit(spec.y - K @ gamma)
    return SparseSolution.build(list(zip(atoms, gamma)), beta)


def _null_direction(matrix: FloatArray) -> Optional[FloatArray]:
    """Unit c with matrix @ c ≈ 0, or None when the columns are independent."""
    _, singular, vt = np.linalg.svd(matrix, full_matrices=True)
    smallest = singular[-1] if matrix.shape[1] <= matrix.shape[0] else 0.0
    if smallest > KERNEL_RANK_TOL * max(1.0, singular[0]):
        return None
    direction = vt[-1].copy()
    direction[np.abs(direction) <= KERNEL_ENTRY_TOL] = 0.0
    return direction


def _kernel_direction(Kp: FloatArray) -> FloatArray:
    """Step direction c with P_⊥K c = 0, Σc <= 0 and at least one negative entry.

    Prefers Σc = 0, which keeps the mass. When rounding hides the ones row in
    the row space of P_⊥K, a kernel vector of P_⊥K alone oriented to Σc <= 0
    still leaves the fit unchanged and never adds mass.
    """
    direction = _null_direction(np.vstack([Kp, np.ones((1, Kp.shape[1]))]))
    if direction is None:
        direction = _null_direction(Kp)
        if direction is None:
            raise NumericalRankAmbiguity(f"no kernel direction among {Kp.shape[1]} atoms")
    mass = float(np.sum(direction))
    if mass > KERNEL_ENTRY_TOL:
        direction = -direction
    elif mass >= -KERNEL_ENTRY_TOL and direction[np.argmax(np.abs(direction))] < 0:
        direction = -direction
    if not (direction < 0).any():
        raise NumericalRankAmbiguity("kernel direction has no usable negative entry")
    return direction


def _fine_peak(spec: ProblemSpec, w: FloatArray, opts: SolverOptions) -> Optional[Tuple[Atom, float]]:
    """Atom with |correlation| above 1 that the lmo grid missed, searched on the certificate grid."""
    family = family_for(spec)
    grid = certificate_grid(spec, FINE_GRID_FACTOR, opts.lmo_grid)
    param, sign, value = family.best_peak(w, grid, opts.refine_iters)
    if value <= 1.0 + opts.gap_tol:
        return None
    return family.make_atom(param, sign), value


def _warn(warnings: List[str], message: str) -> None:
    logger.warning(message)
    warnings.append(message)


def _prune_with_fallback(
    spec: ProblemSpec,
    solution: SparseSolution,
    opts: SolverOptions,
    projector: NullSpaceProjector,
    warnings: List[str],
) -> SparseSolution:
    w = dual_vector(spec, solution, projector)
    try:
        return caratheodory_prune(spec, solution, w, opts)
    except NumericalRankAmbiguity as e:
        _warn(warnings, f"saturated pruning failed ({e}); pruning only to dim H_N + 1")
    except NonSaturatedAtoms:
        # One extra corrective pass drops atoms that fell off the hyperplane
        try:
            solution = fully_corrective_subproblem(
                spec, [atom for atom, _ in solution.atoms], opts, warm_start=solution.weights
            )
        except MaxItersExceeded as e:
            solution = e.best
        w = dual_vector(spec, solution, projector)
        try:
            return caratheodory_prune(spec, solution, w, opts)
        except NonSaturatedAtoms as e:
            _warn(warnings, f"atoms not saturated ({e}); pruning only to dim H_N + 1")
        except NumericalRankAmbiguity as e:
            _warn(warnings, f"saturated pruning failed ({e}); pruning only to dim H_N + 1")
    try:
        return caratheodory_prune(spec, solution, w, opts, require_saturation=False)
    except NumericalRankAmbiguity as e:
        _warn(warnings, f"pruning skipped: {e}")
        return solution


def solve(
    spec: ProblemSpec, opts: Optional[SolverOptions] = None
) -> Tuple[SparseSolution, CertificateReport, SolverReport]:
    opts = opts or SolverOptions()
    started = time.perf_counter()
    family = family_for(spec)
    projector = NullSpaceProjector.for_spec(spec)
    dim_hn = dim_quotient(spec)
    warnings: List[str] = []
    trace: List[TraceEntry] = []

    solution = SparseSolution.build([], projector.fit(spec.y))
    converged = False
    for iteration in range(opts.max_iters):
        w = dual_vector(spec, solution, projector)
        atom, sup_value = lmo(spec, w, opts)
        value = objective(spec, solution)
        gap = duality_gap(spec, solution, w, opts, sup_value=sup_value)
        trace.append(TraceEntry(iteration, value, gap, solution.p))
        logger.debug(
            f"iteration {iteration}: objective={value:.12g} gap={gap:.3g} "
            f"atoms={solution.p} sup={sup_value:.12g}"
        )
        if gap <= opts.gap_tol * (1.0 + abs(value)):
            missed = _fine_peak(spec, w, opts)
            if missed is None:
                converged = True
                break
            atom, sup_value = missed
            logger.debug(f"fine sweep found correlation {sup_value:.12g} at {atom.param:.12g}")
        if solution.p and np.min(np.abs(solution.params - atom.param)) <= family.merge_tol:
            _warn(
                warnings,
                f"stalled at iteration {iteration}: oracle returned an existing atom (gap {gap:.3g})",
            )
            break
        atoms = [a for a, _ in solution.atoms] + [atom]
        try:
            solution = fully_corrective_subproblem(
                spec, atoms, opts, warm_start=np.append(solution.weights, 0.0)
            )
        except MaxItersExceeded as e:
            logger.warning(str(e))
            solution = e.best
    else:
        _warn(warnings, f"no convergence within {opts.max_iters} iterations")

    solution = _prune_with_fallback(spec, solution, opts, projector, warnings)

    w = dual_vector(spec, solution, projector)
    certificate = certify(spec, solution, w, lmo_grid=opts.lmo_grid, refine_iters=opts.refine_iters)
    _, sup_value = lmo(spec, w, opts)
    sup_value = max(sup_value, certificate.certificate.sup_value)
    final_objective = objective(spec, solution)
    gap = duality_gap(spec, solution, w, opts, sup_value=sup_value)
    report = SolverReport(
        objective=final_objective,
        gap=gap,
        dual_value=dual_value(spec, w / max(1.0, sup_value)),
        iterations=len(trace),
        p=solution.p,
        dim_hn=dim_hn,
        trace=tuple(trace),
        wall_time=time.perf_counter() - started,
        converged=converged,
        certified=converged and certificate.passed,
        warnings=tuple(warnings),
    )
    logger.info(
        f"solved {spec.kind.value}: objective={final_objective:.10g} gap={gap:.3g} "
        f"p={solution.p} dim_HN={dim_hn} certified={report.certified}"
    )
    return solution, certificate, report
