"""Green's-function atoms for L = D^q on an interval.

G_x(s) = (s - x)_+^(q-1) / (q-1)! solves L G_x = δ_x; the null space of
‖Lu‖_M is the polynomials of degree < q. A weighted sum of atoms is the
spike measure pushed through G, so no separate solution operator exists.
"""

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, List, Optional, Sequence

import numpy as np

from exsparse.atoms_base import Atom, AtomFamily, FloatArray, SparseSolution, WeightedAtom
from exsparse.atoms_base import merge_atoms as _merge_atoms
from exsparse.kernels import Domain

if TYPE_CHECKING:
    from exsparse.core_model import ProblemSpec


@dataclass(frozen=True)
class GreenAtom(Atom):
    order: int = 1

    @property
    def x(self) -> float:
        return self.param


class GreenFamily(AtomFamily):
    def __init__(self, spec: "ProblemSpec"):
        super().__init__(spec, order=spec.atom_order)

    def make_atom(self, param: float, sign: int) -> GreenAtom:
        return GreenAtom(float(param), int(sign), order=self.order)


def green_function(x: float, s: Any, order: int) -> FloatArray:
    s = np.asarray(s, dtype=float)
    if order == 1:
        return (s > x).astype(float)
    return np.maximum(s - x, 0.0) ** (order - 1) / math.factorial(order - 1)


def measure_atom(spec: "ProblemSpec", atom: GreenAtom) -> FloatArray:
    return GreenFamily(spec).measure_atom(atom)


def correlation(spec: "ProblemSpec", w: Any, x: Any) -> FloatArray:
    """x ↦ Σ_i w_i ∫ k_i G_x."""
    return GreenFamily(spec).correlation(w, x)


def correlation_derivative(spec: "ProblemSpec", w: Any, x: Any) -> FloatArray:
    return GreenFamily(spec).correlation_derivative(w, x)


def merge_atoms(items: Sequence[WeightedAtom], domain: Domain) -> List[WeightedAtom]:
    return _merge_atoms(items, domain)


def reconstruct(solution: SparseSolution, s: Any, order: Optional[int] = None) -> FloatArray:
    """Evaluate Σ_j β_j s^j + Σ_i γ_i σ_i G_{x_i}(s), a spline of degree q-1.

    Without an explicit order each atom evaluates at the order it was built with.
    """
    s = np.asarray(s, dtype=float)
    values = np.polynomial.polynomial.polyval(s, solution.beta) if solution.beta.size else 0.0
    values = values + np.zeros_like(s)
    for (atom, weight) in solution.atoms:
        q = order if order is not None else _atom_order(atom)
        values = values + weight * atom.sign * green_function(atom.param, s, q)
    return values


def _atom_order(atom: Atom) -> int:
    if not isinstance(atom, GreenAtom):
        raise TypeError(f"cannot infer the spline order of {atom!r}; pass order explicitly")
    return atom.order
