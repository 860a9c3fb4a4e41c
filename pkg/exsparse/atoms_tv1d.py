"""Signed unit steps σχ_(t,hi), the extremal points of the 1-D total-variation ball.

In one dimension the simple sets are the boundary-touching intervals (t, hi)
and (lo, t). The second equals a negated first up to a constant, which the
null space absorbs, so a sign and a jump location parametrize every atom.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, List, Sequence

import numpy as np

from exsparse.atoms_base import Atom, AtomFamily, FloatArray, SparseSolution, WeightedAtom
from exsparse.atoms_base import merge_atoms as _merge_atoms
from exsparse.errors import JumpPointQuery
from exsparse.kernels import Domain

if TYPE_CHECKING:
    from exsparse.core_model import ProblemSpec

JUMP_QUERY_TOL = 1e-12


@dataclass(frozen=True)
class StepAtom(Atom):
    @property
    def t(self) -> float:
        return self.param


class StepFamily(AtomFamily):
    def __init__(self, spec: "ProblemSpec"):
        super().__init__(spec, order=1)

    def make_atom(self, param: float, sign: int) -> StepAtom:
        return StepAtom(float(param), int(sign))


def measure_atom(spec: "ProblemSpec", atom: StepAtom) -> FloatArray:
    return StepFamily(spec).measure_atom(atom)


def correlation(spec: "ProblemSpec", w: Any, t: Any) -> FloatArray:
    """g(t) = Σ_i w_i ∫_t^hi k_i."""
    return StepFamily(spec).correlation(w, t)


def correlation_derivative(spec: "ProblemSpec", w: Any, t: Any) -> FloatArray:
    """g'(t) = -Σ_i w_i k_i(t)."""
    return StepFamily(spec).correlation_derivative(w, t)


def merge_atoms(items: Sequence[WeightedAtom], domain: Domain) -> List[WeightedAtom]:
    return _merge_atoms(items, domain)


def reconstruct(solution: SparseSolution, s: Any) -> FloatArray:
    """Evaluate β + Σ γ_i σ_i χ_(t_i,hi)(s), a piecewise constant function."""
    s = np.asarray(s, dtype=float)
    flat = np.atleast_1d(s)
    jumps = solution.params
    if jumps.size and np.any(np.abs(flat[:, None] - jumps[None, :]) <= JUMP_QUERY_TOL):
        raise JumpPointQuery("reconstruction is undefined at a jump location")
    level = solution.beta[0] if solution.beta.size else 0.0
    values = level + (flat[:, None] > jumps[None, :]).astype(float) @ (
        solution.signs * solution.weights
    )
    return values.reshape(s.shape)


def jump_sizes(solution: SparseSolution) -> FloatArray:
    """|u(t_i+) - u(t_i-)| at each jump, in atom order."""
    return np.abs(solution.signs * solution.weights)
