"""Signed Dirac atoms σδ_x, the extremal points of the Radon-norm ball."""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, List, Sequence, Tuple

import numpy as np

from exsparse.atoms_base import (
    Atom,
    AtomFamily,
    FloatArray,
    SparseSolution,
    WeightedAtom,
)
from exsparse.atoms_base import merge_atoms as _merge_atoms
from exsparse.kernels import Domain

if TYPE_CHECKING:
    from exsparse.core_model import ProblemSpec


@dataclass(frozen=True)
class DiracAtom(Atom):
    @property
    def x(self) -> float:
        return self.param


class DiracFamily(AtomFamily):
    def __init__(self, spec: "ProblemSpec"):
        super().__init__(spec, order=0)

    def make_atom(self, param: float, sign: int) -> DiracAtom:
        return DiracAtom(float(param), int(sign))


def measure_atom(spec: "ProblemSpec", atom: DiracAtom) -> FloatArray:
    return DiracFamily(spec).measure_atom(atom)


def correlation(spec: "ProblemSpec", w: Any, x: Any) -> FloatArray:
    """x ↦ Σ_i w_i k_i(x)."""
    return DiracFamily(spec).correlation(w, x)


def correlation_derivative(spec: "ProblemSpec", w: Any, x: Any) -> FloatArray:
    return DiracFamily(spec).correlation_derivative(w, x)


def merge_atoms(items: Sequence[WeightedAtom], domain: Domain) -> List[WeightedAtom]:
    return _merge_atoms(items, domain)


def spike_train(solution: SparseSolution) -> Tuple[FloatArray, FloatArray]:
    """Positions and signed masses of the measure Σ γ_i σ_i δ_{x_i}, sorted by position."""
    order = np.argsort(solution.params)
    positions = solution.params[order]
    masses = (solution.signs * solution.weights)[order]
    return positions, masses
