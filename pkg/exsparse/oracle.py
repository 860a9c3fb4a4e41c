"""Grid-discretized reference solutions.

The atom parameter is restricted to m equispaced nodes, turning the problem
into a finite LASSO (quadratic fidelity) or a linear program (exact data).
Both serve as independent checks of `solver.solve`.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.core_model import NullSpaceProjector, ProblemSpec, null_basis_images, objective
from exsparse.errors import ExsparseError, MalformedSpec, MaxItersExceeded, ScaleGuard
from exsparse.simplex import solve_standard_form
from exsparse.weights import WeightProblem

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

SPOT_CHECKS = 16
SPOT_TOL = 1e-12
SUPPORT_THRESHOLD = 1e-6
MAX_EXACT_KERNELS = 20
MAX_EXACT_GRID = 4096
WARM_ITERS = 2000
KKT_TOL = 1e-9


class OracleMode(Enum):
    LASSO = "lasso"
    EXACT = "exact"


@dataclass(frozen=True)
class GridProblem:
    mode: OracleMode
    grid: FloatArray
    columns: FloatArray
    B: FloatArray
    lam: Optional[float] = None

    @property
    def m(self) -> int:
        return self.grid.size

    @classmethod
    def build(
        cls, spec: ProblemSpec, m: int, mode: OracleMode = OracleMode.LASSO, lam: Optional[float] = None
    ) -> "GridProblem":
        if m < 2:
            raise MalformedSpec(f"oracle grid needs m >= 2 nodes, got {m}")
        family = family_for(spec)
        grid = family.parameter_grid(m)
        columns = family.images(grid)

        rng = np.random.Generator(np.random.MT19937(m))
        for j in rng.choice(m, size=min(SPOT_CHECKS, m), replace=False):
            expected = family.measure_atom(family.make_atom(grid[j], 1))
            if np.max(np.abs(columns[:, j] - expected)) > SPOT_TOL * max(1.0, np.max(np.abs(expected))):
                raise ExsparseError(f"grid column {j} disagrees with the atom measurement")

        return cls(
            mode=mode,
            grid=grid,
            columns=columns,
            B=null_basis_images(spec),
            lam=(spec.lam if lam is None else float(lam)) if mode == OracleMode.LASSO else None,
        )


@dataclass(frozen=True)
class OracleResult:
    mode: OracleMode
    grid: FloatArray
    c: FloatArray
    beta: FloatArray
    objective: float
    iterations: int
    converged: bool = True

    @property
    def m(self) -> int:
        return self.grid.size

    @property
    def grid_step(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def support(self) -> NDArray[np.intp]:
        """Indices of nodes carrying non-negligible weight."""
        scale = max(float(np.max(np.abs(self.c), initial=0.0)), 1e-300)
        return np.flatnonzero(np.abs(self.c) > SUPPORT_THRESHOLD * scale)

    def to_solution(self, spec: ProblemSpec) -> SparseSolution:
        family = family_for(spec)
        atoms = [
            (family.make_atom(self.grid[j], 1 if self.c[j] > 0 else -1), abs(self.c[j]))
            for j in np.flatnonzero(self.c)
        ]
        return SparseSolution.build(atoms, self.beta)


def _soft_threshold(v: FloatArray, threshold: float) -> FloatArray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def _proximal_gradient(
    K: FloatArray, y: FloatArray, lam: float, start: FloatArray, tol: float, max_iters: int
) -> Tuple[FloatArray, int, bool]:
    """FISTA with backtracking and restart on ‖c‖₁ + (λ/2)‖Kc - y‖².

    Returns (c, iterations, settled) where settled means the relative
    objective change fell to tol.
    """

    def smooth(c: FloatArray) -> Tuple[float, FloatArray]:
        residual = K @ c - y
        return 0.5 * lam * float(residual @ residual), lam * (K.T @ residual)

    # Largest squared column norm bounds ‖K‖² from below
    lipschitz = max(lam * float(np.max(np.sum(K * K, axis=0))), 1e-12)
    x = start.copy()
    z = x.copy()
    t = 1.0
    value = smooth(x)[0] + float(np.sum(np.abs(x)))
    iteration = 0
    for iteration in range(1, max_iters + 1):
        f_z, grad_z = smooth(z)
        while True:
            x_new = _soft_threshold(z - grad_z / lipschitz, 1.0 / lipschitz)
            step = x_new - z
            f_new, _ = smooth(x_new)
            if f_new <= f_z + float(grad_z @ step) + 0.5 * lipschitz * float(step @ step) + 1e-15 * abs(f_z):
                break
            lipschitz *= 2.0
        new_value = f_new + float(np.sum(np.abs(x_new)))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if new_value > value:
            # Restart momentum and keep the previous iterate
            z, t = x.copy(), 1.0
            continue
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        change = value - new_value
        x, value, t = x_new, new_value, t_new
        if change <= tol * max(1.0, abs(value)):
            return x, iteration, True
    return x, iteration, False


def _exact_finish(split: WeightProblem, c: FloatArray, kkt_tol: float) -> Optional[FloatArray]:
    """Signed grid weights solving the split problem over [c⁺, c⁻] >= 0 to kkt_tol, or None."""
    m = c.size
    start = np.concatenate([np.maximum(c, 0.0), np.maximum(-c, 0.0)])
    candidates = [split.exact(float(np.sum(start)))]
    polished = split.polish(candidates[0])
    if polished is not None:
        candidates.append(polished)
    for gamma in sorted(candidates, key=split.value):
        if split.projected_gradient_norm(gamma) <= kkt_tol:
            return gamma[:m] - gamma[m:]
    return None


def grid_solve_lasso(
    spec: ProblemSpec,
    m: int,
    lam: Optional[float] = None,
    tol: float = 1e-12,
    max_iters: int = 200000,
) -> OracleResult:
    """min ‖c‖₁ + (λ/2)‖Kc + Bβ - y‖² over grid weights c and free β.

    β is eliminated by projecting off span(B). A short proximal-gradient run
    with backtracking seeds an exact finish over the split weights
    [c⁺, c⁻] >= 0; if the finish misses the KKT tolerance the proximal
    iteration resumes until the relative objective change is <= tol.
    """
    problem = GridProblem.build(spec, m, OracleMode.LASSO, lam)
    lam = problem.lam
    projector = NullSpaceProjector(problem.B)
    K = projector.project(problem.columns)
    y = projector.project(spec.y)

    x, iterations, settled = _proximal_gradient(K, y, lam, np.zeros(m), tol, min(max_iters, WARM_ITERS))
    split = WeightProblem(np.hstack([K, -K]), y, lam)
    kkt_tol = KKT_TOL * (1.0 + lam * float(np.linalg.norm(y)))
    finished = _exact_finish(split, x, kkt_tol)
    if finished is not None:
        x, converged = finished, True
    elif not settled and iterations < max_iters:
        logger.debug(f"grid LASSO m={m}: exact finish missed, resuming proximal gradient")
        x, more, converged = _proximal_gradient(K, y, lam, x, tol, max_iters - iterations)
        iterations += more
    else:
        converged = settled

    residual = K @ x - y
    value = float(np.sum(np.abs(x))) + 0.5 * lam * float(residual @ residual)
    beta = projector.fit(spec.y - problem.columns @ x)
    result = OracleResult(OracleMode.LASSO, problem.grid, x, beta, value, iterations, converged)
    if not converged:
        raise MaxItersExceeded(f"grid LASSO did not settle within {max_iters} iterations", best=result)
    logger.debug(f"grid LASSO m={m}: objective={value:.12g} after {iterations} iterations")
    return result


def grid_solve_exact(spec: ProblemSpec, m: int) -> OracleResult:
    """min ‖c‖₁ subject to Kc + Bβ = y, as an LP over [c⁺, c⁻, β⁺, β⁻] >= 0."""
    if spec.n > MAX_EXACT_KERNELS or m > MAX_EXACT_GRID:
        raise ScaleGuard(
            f"exact oracle is limited to N <= {MAX_EXACT_KERNELS} and m <= {MAX_EXACT_GRID} "
            f"(got N={spec.n}, m={m})"
        )
    problem = GridProblem.build(spec, m, OracleMode.EXACT)
    K, B = problem.columns, problem.B
    q = B.shape[1]
    A_eq = np.hstack([K, -K, B, -B])
    cost = np.concatenate([np.ones(2 * m), np.zeros(2 * q)])
    lp = solve_standard_form(cost, A_eq, spec.y)
    c = lp.x[:m] - lp.x[m : 2 * m]
    beta = lp.x[2 * m : 2 * m + q] - lp.x[2 * m + q :]
    logger.debug(f"exact grid LP m={m}: objective={lp.objective:.12g} after {lp.pivots} pivots")
    return OracleResult(OracleMode.EXACT, problem.grid, c, beta, float(np.sum(np.abs(c))), lp.pivots)


@dataclass(frozen=True)
class ComparisonReport:
    solver_objective: float
    oracle_objective: float
    objective_difference: float
    relative_difference: float
    support_distance: float
    grid_step: float
    rel_tol: float
    support_steps: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "solver_objective": self.solver_objective,
            "oracle_objective": self.oracle_objective,
            "objective_difference": self.objective_difference,
            "relative_difference": self.relative_difference,
            "support_distance": self.support_distance,
            "grid_step": self.grid_step,
            "rel_tol": self.rel_tol,
            "support_steps": self.support_steps,
        }


def _hausdorff(a: FloatArray, b: FloatArray) -> float:
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float("inf")
    distances = np.abs(a[:, None] - b[None, :])
    return float(max(distances.min(axis=1).max(), distances.min(axis=0).max()))


def compare(
    spec: ProblemSpec,
    solution: SparseSolution,
    oracle_result: OracleResult,
    rel_tol: float = 1e-4,
    support_steps: float = 2.0,
) -> ComparisonReport:
    """Objective agreement and Hausdorff distance between atom parameters and oracle support.

    Against an exact-mode oracle only the regularizer value Σγ is compared.
    """
    if oracle_result.mode == OracleMode.EXACT:
        solver_value = solution.total_mass
    else:
        solver_value = objective(spec, solution)
    difference = solver_value - oracle_result.objective
    relative = abs(difference) / (1.0 + abs(oracle_result.objective))
    distance = _hausdorff(solution.params, oracle_result.grid[oracle_result.support])
    step = (spec.domain.hi - spec.domain.lo) / (oracle_result.m - 1)
    return ComparisonReport(
        solver_objective=solver_value,
        oracle_objective=oracle_result.objective,
        objective_difference=difference,
        relative_difference=relative,
        support_distance=distance,
        grid_step=step,
        rel_tol=rel_tol,
        support_steps=support_steps,
        passed=relative <= rel_tol and distance <= support_steps * step,
    )
