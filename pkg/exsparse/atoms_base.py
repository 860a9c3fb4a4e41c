"""Shared machinery of the three atom families.

An atom is a signed extremal point of the regularizer's unit ball, fixed by a
scalar parameter. Each family pairs atoms with the measurement kernels through
a truncated-power order (0: Dirac, 1: step, q: D^q Green's function).
"""

import dataclasses
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, minimize_scalar

from exsparse.errors import DuplicateAtoms, OutOfDomain
from exsparse.kernels import Domain, kernel_derivative_matrix, kernel_matrix

if TYPE_CHECKING:
    from exsparse.core_model import ProblemSpec

FloatArray = NDArray[np.float64]

# Relative to the domain length
MARGIN = 1e-9
MERGE_TOL = 1e-8
CANCEL_TOL = 1e-12
PEAK_CANDIDATES = 10


@dataclass(frozen=True)
class Atom:
    param: float
    sign: int

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise ValueError(f"atom sign must be +1 or -1, got {self.sign}")

    def negated(self) -> "Atom":
        return dataclasses.replace(self, sign=-self.sign)


WeightedAtom = Tuple[Atom, float]


@dataclass(frozen=True)
class SparseSolution:
    """ū = Σ_j β_j ψ_j + Σ_i γ_i u_i with every γ_i > 0."""

    atoms: Tuple[WeightedAtom, ...] = ()
    null_coeffs: Tuple[float, ...] = ()

    @classmethod
    def build(cls, atoms: Sequence[WeightedAtom], null_coeffs: Any = ()) -> "SparseSolution":
        return cls(
            atoms=tuple((atom, float(weight)) for atom, weight in atoms),
            null_coeffs=tuple(float(b) for b in np.atleast_1d(np.asarray(null_coeffs, dtype=float))),
        )

    @property
    def p(self) -> int:
        return len(self.atoms)

    @property
    def params(self) -> FloatArray:
        return np.array([atom.param for atom, _ in self.atoms], dtype=float)

    @property
    def signs(self) -> FloatArray:
        return np.array([atom.sign for atom, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> FloatArray:
        return np.array([weight for _, weight in self.atoms], dtype=float)

    @property
    def beta(self) -> FloatArray:
        return np.array(self.null_coeffs, dtype=float)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))


def merge_atoms(
    items: Sequence[WeightedAtom], domain: Domain, tol_factor: float = MERGE_TOL
) -> List[WeightedAtom]:
    """Collapse atoms whose parameters lie within tol_factor*(hi - lo) of each other.

    Same-sign weights add, opposite signs cancel; the survivor keeps the
    parameter of the heaviest member and the sign of the net weight.
    """
    tol = tol_factor * domain.length
    current = sorted(items, key=lambda item: item[0].param)
    while True:
        merged: List[WeightedAtom] = []
        changed = False
        i = 0
        while i < len(current):
            group = [current[i]]
            j = i + 1
            while j < len(current) and current[j][0].param - group[0][0].param <= tol:
                group.append(current[j])
                j += 1
            if len(group) == 1:
                merged.append(group[0])
            else:
                changed = True
                collapsed = _collapse(group)
                if collapsed is not None:
                    merged.append(collapsed)
            i = j
        current = merged
        if not changed:
            return current


def _collapse(group: Sequence[WeightedAtom]) -> Optional[WeightedAtom]:
    net = sum(atom.sign * weight for atom, weight in group)
    if abs(net) <= CANCEL_TOL:
        return None
    heaviest, _ = max(group, key=lambda item: item[1])
    sign = 1 if net > 0 else -1
    return dataclasses.replace(heaviest, sign=sign), abs(net)


class AtomFamily(ABC):
    spec: "ProblemSpec"
    order: int

    def __init__(self, spec: "ProblemSpec", order: int):
        self.spec = spec
        self.order = order

    @abstractmethod
    def make_atom(self, param: float, sign: int) -> Atom: ...

    @property
    def domain(self) -> Domain:
        return self.spec.domain

    @property
    def margin(self) -> float:
        return MARGIN * self.domain.length

    @property
    def merge_tol(self) -> float:
        return MERGE_TOL * self.domain.length

    def clamp(self, param: float) -> float:
        return float(np.clip(param, self.domain.lo + self.margin, self.domain.hi - self.margin))

    def parameter_grid(self, m: int) -> FloatArray:
        return np.linspace(self.domain.lo + self.margin, self.domain.hi - self.margin, m)

    def check_atom(self, atom: Atom) -> None:
        lo = self.domain.lo + self.margin
        hi = self.domain.hi - self.margin
        if not lo <= atom.param <= hi:
            raise OutOfDomain(f"atom parameter {atom.param} outside [{lo}, {hi}]")

    def images(self, params: Any) -> FloatArray:
        """Unsigned atom images, one column per parameter."""
        return kernel_matrix(self.spec.kernels, params, self.order, self.domain)

    def images_derivative(self, params: Any) -> FloatArray:
        return kernel_derivative_matrix(self.spec.kernels, params, self.order, self.domain)

    def measure_atom(self, atom: Atom) -> FloatArray:
        self.check_atom(atom)
        return atom.sign * self.images([atom.param])[:, 0]

    def signed_images(self, solution: SparseSolution) -> FloatArray:
        if solution.p == 0:
            return np.zeros((self.spec.n, 0))
        return self.images(solution.params) * solution.signs

    def correlation(self, w: Any, params: Any) -> FloatArray:
        w = np.asarray(w, dtype=float)
        return w @ self.images(params)

    def correlation_derivative(self, w: Any, params: Any) -> FloatArray:
        w = np.asarray(w, dtype=float)
        return w @ self.images_derivative(params)

    def merge(self, items: Sequence[WeightedAtom]) -> List[WeightedAtom]:
        return merge_atoms(items, self.domain)

    def check_distinct(self, solution: SparseSolution) -> None:
        params = np.sort(solution.params)
        if params.size > 1 and np.min(np.diff(params)) <= self.merge_tol:
            raise DuplicateAtoms("solution has atoms closer than the merge tolerance; merge first")

    def refine_peak(
        self, w: Any, grid: FloatArray, index: int, sign: int, iters: int
    ) -> Tuple[float, float]:
        """Maximize sign * correlation between the grid neighbours of grid[index].

        Returns (parameter, value); the value never drops below the grid value.
        """
        w = np.asarray(w, dtype=float)
        left = float(grid[max(index - 1, 0)])
        right = float(grid[min(index + 1, len(grid) - 1)])

        def value(t: float) -> float:
            return sign * float(self.correlation(w, [t])[0])

        def slope(t: float) -> float:
            return sign * float(self.correlation_derivative(w, [t])[0])

        best_t = float(grid[index])
        best_v = value(best_t)
        if right <= left:
            return best_t, best_v
        if slope(left) > 0.0 > slope(right):
            t = brentq(
                slope,
                left,
                right,
                xtol=1e-15 * self.domain.length,
                maxiter=iters,
                disp=False,
            )
        else:
            t = minimize_scalar(
                lambda s: -value(s),
                bounds=(left, right),
                method="bounded",
                options={"xatol": 1e-12 * self.domain.length, "maxiter": iters},
            ).x
        t = self.clamp(float(t))
        v = value(t)
        if v > best_v:
            best_t, best_v = t, v
        return best_t, best_v

    def best_peak(
        self, w: Any, grid: FloatArray, iters: int, candidates: int = PEAK_CANDIDATES
    ) -> Tuple[float, int, float]:
        """Largest |correlation| over the family as (parameter, sign, value).

        The `candidates` highest local maxima of |correlation| on grid are each
        refined, so a narrow peak that loses to a broad one on the grid still wins
        after refinement. A zero correlation returns (grid[0], +1, 0).
        """
        w = np.asarray(w, dtype=float)
        values = self.correlation(w, grid)
        magnitude = np.abs(values)
        # argmax keeps the smallest parameter among ties
        index = int(np.argmax(magnitude))
        if magnitude[index] == 0.0:
            return float(grid[0]), 1, 0.0
        best = (float(grid[index]), 1 if values[index] > 0 else -1, float(magnitude[index]))
        for index in local_maxima(magnitude, candidates):
            sign = 1 if values[index] >= 0 else -1
            param, value = self.refine_peak(w, grid, int(index), sign, iters)
            if value > best[2]:
                best = (param, sign, value)
        return best


def local_maxima(values: FloatArray, count: int) -> NDArray[np.intp]:
    """Indices of the `count` largest local maxima of values (endpoints included)."""
    if values.size < 3:
        return np.argsort(-values, kind="stable")[:count]
    left = np.concatenate([[-np.inf], values[:-1]])
    right = np.concatenate([values[1:], [-np.inf]])
    peaks = np.flatnonzero((values >= left) & (values >= right))
    return peaks[np.argsort(-values[peaks], kind="stable")][:count]
