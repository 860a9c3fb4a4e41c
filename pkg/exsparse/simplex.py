"""Dense two-phase tableau simplex with Bland's rule.

Solves min cᵀx subject to Ax = b, x >= 0 for small dense problems. Bland's
rule (lowest eligible index enters and leaves) rules out cycling, so the
method always terminates at a basic optimal solution.
"""

import logging
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from exsparse.errors import ExsparseError, Infeasible

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class LinearProgramResult:
    x: FloatArray
    objective: float
    basis: Tuple[int, ...]
    pivots: int


def _pivot(tableau: FloatArray, row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    column = tableau[:, col].copy()
    column[row] = 0.0
    tableau -= np.outer(column, tableau[row])


def _run(tableau: FloatArray, basis: List[int], columns: int, tol: float, max_pivots: int) -> int:
    """Pivot until no reduced cost in the first `columns` entries is negative."""
    pivots = 0
    while True:
        costs = tableau[-1, :columns]
        eligible = np.flatnonzero(costs < -tol)
        if eligible.size == 0:
            return pivots
        col = int(eligible[0])
        entries = tableau[:-1, col]
        rows = np.flatnonzero(entries > tol)
        if rows.size == 0:
            raise ExsparseError(f"linear program is unbounded along column {col}")
        ratios = tableau[rows, -1] / entries[rows]
        best = np.min(ratios)
        ties = rows[ratios <= best + tol * max(1.0, abs(best))]
        # Bland: among tied rows, the smallest basic variable leaves
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(tableau, row, col)
        basis[row] = col
        pivots += 1
        if pivots > max_pivots:
            raise ExsparseError(f"simplex exceeded {max_pivots} pivots")


def solve_standard_form(
    c: Any,
    A: Any,
    b: Any,
    tol: float = PIVOT_TOL,
    max_pivots: Optional[int] = None,
) -> LinearProgramResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float, ndmin=2)
    b = np.array(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError(f"inconsistent shapes: c {c.shape}, A {A.shape}, b {b.shape}")
    max_pivots = max_pivots or 50 * (m + n)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    tol = tol * scale

    flip = b < 0
    A = np.where(flip[:, None], -A, A)
    b = np.where(flip, -b, b)

    # Phase 1: artificial identity block, minimize the sum of artificials
    tableau = np.zeros((m + 1, n + m + 1))
    tableau[:m, :n] = A
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    tableau[-1, :n] = -A.sum(axis=0)
    tableau[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    pivots = _run(tableau, basis, n, tol, max_pivots)
    if -tableau[-1, -1] > tol * (1.0 + float(np.sum(b))):
        raise Infeasible(f"no feasible point (phase-one residual {-tableau[-1, -1]:.3g})")

    # Drive remaining artificials out of the basis; rows where that fails are redundant
    keep_rows = []
    for row in range(m):
        if basis[row] >= n:
            candidates = np.flatnonzero(np.abs(tableau[row, :n]) > tol)
            if candidates.size == 0:
                continue
            col = int(candidates[0])
            _pivot(tableau, row, col)
            basis[row] = col
            pivots += 1
        keep_rows.append(row)
    if len(keep_rows) < m:
        logger.debug(f"dropped {m - len(keep_rows)} redundant equality row(s)")

    # Phase 2 on the structural columns
    phase2 = np.zeros((len(keep_rows) + 1, n + 1))
    phase2[:-1, :n] = tableau[keep_rows, :n]
    phase2[:-1, -1] = tableau[keep_rows, -1]
    basis = [basis[row] for row in keep_rows]
    phase2[-1, :n] = c
    for row, col in enumerate(basis):
        phase2[-1] -= c[col] * phase2[row]
    pivots += _run(phase2, basis, n, tol, max_pivots)

    # Re-solve the basic block against the original rows
    x = np.zeros(n)
    basic, *_ = np.linalg.lstsq(A[keep_rows][:, basis], b[keep_rows], rcond=None)
    x[basis] = np.maximum(basic, 0.0)
    return LinearProgramResult(x=x, objective=float(c @ x), basis=tuple(basis), pivots=pivots)
