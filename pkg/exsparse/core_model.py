"""Problem definition: min_u φ(u) + F(Au) with N kernel measurements.

The regularizer φ is chosen by `Kind` (Radon norm, 1-D total variation, or
‖D^q u‖_M); F is the quadratic fidelity (λ/2)‖v - y‖².
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.errors import MalformedSpec
from exsparse.kernels import Domain, Kernel, KernelType

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

ENDPOINT_TOL = 1e-9
H0_GRID = 256
# Null images come from quadrature at 1e-10; anything smaller is noise
NULL_IMAGE_TOL = 1e-9


class Kind(Enum):
    MEASURES = "measures"
    TV1D = "tv1d"
    SPLINE = "spline"


@dataclass(frozen=True)
class QuadraticFidelity:
    lam: float

    def value(self, v: FloatArray, y: FloatArray) -> float:
        return 0.5 * self.lam * float(np.sum((v - y) ** 2))

    def gradient(self, v: FloatArray, y: FloatArray) -> FloatArray:
        return self.lam * (v - y)

    def conjugate(self, w: FloatArray, y: FloatArray) -> float:
        return float(np.dot(w, w)) / (2.0 * self.lam) + float(np.dot(w, y))


@dataclass(frozen=True)
class ProblemSpec:
    kind: Kind
    domain: Domain
    kernels: Tuple[Kernel, ...]
    data: Tuple[float, ...]
    fidelity: QuadraticFidelity
    spline_order: Optional[int] = None

    def __post_init__(self) -> None:
        check_well_formed(self)

    @classmethod
    def build(
        cls,
        kind: Kind,
        domain: Sequence[float],
        kernels: Sequence[Kernel],
        data: Sequence[float],
        lam: float,
        spline_order: Optional[int] = None,
    ) -> "ProblemSpec":
        return cls(
            kind=kind,
            domain=Domain(float(domain[0]), float(domain[1])),
            kernels=tuple(kernels),
            data=tuple(float(v) for v in data),
            fidelity=QuadraticFidelity(float(lam)),
            spline_order=spline_order,
        )

    @property
    def n(self) -> int:
        return len(self.kernels)

    @property
    def y(self) -> FloatArray:
        return np.array(self.data, dtype=float)

    @property
    def lam(self) -> float:
        return self.fidelity.lam

    @property
    def null_dim(self) -> int:
        match self.kind:
            case Kind.MEASURES:
                return 0
            case Kind.TV1D:
                return 1
            case Kind.SPLINE:
                return int(self.spline_order or 0)

    @property
    def atom_order(self) -> int:
        """Truncated-power order of the atom pairing (0 for Diracs)."""
        match self.kind:
            case Kind.MEASURES:
                return 0
            case Kind.TV1D:
                return 1
            case Kind.SPLINE:
                return int(self.spline_order or 0)

    def with_data(self, data: Sequence[float]) -> "ProblemSpec":
        return ProblemSpec(
            self.kind,
            self.domain,
            self.kernels,
            tuple(float(v) for v in data),
            self.fidelity,
            self.spline_order,
        )


def check_well_formed(spec: ProblemSpec) -> None:
    lo, hi = spec.domain
    if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
        raise MalformedSpec(f"domain must be a finite interval with lo < hi, got ({lo}, {hi})", key="domain")
    if spec.n < 1:
        raise MalformedSpec("at least one kernel is required", key="kernels")
    if len(spec.data) != spec.n:
        raise MalformedSpec(f"data has {len(spec.data)} entries but there are {spec.n} kernels", key="data")
    if not all(np.isfinite(spec.data)):
        raise MalformedSpec("data must be finite", key="data")
    if not (np.isfinite(spec.fidelity.lam) and spec.fidelity.lam > 0):
        raise MalformedSpec(f"lambda must be positive, got {spec.fidelity.lam}", key="lambda")
    if spec.kind == Kind.SPLINE:
        if spec.spline_order is None or spec.spline_order < 1:
            raise MalformedSpec(
                f"spline kind needs spline_order >= 1, got {spec.spline_order}", key="spline_order"
            )
    elif spec.spline_order is not None:
        raise MalformedSpec(
            f"spline_order is only valid for the spline kind, not {spec.kind.value}", key="spline_order"
        )
    if spec.kind == Kind.MEASURES:
        for i, kernel in enumerate(spec.kernels):
            if kernel.type == KernelType.CELL:
                raise MalformedSpec(
                    f"kernel {i}: cell kernels are not continuous, not allowed for measures", key="kernels"
                )
            ends = np.abs(kernel.evaluate(np.array([lo, hi]), spec.domain))
            if np.max(ends) > ENDPOINT_TOL:
                raise MalformedSpec(
                    f"kernel {i} ({kernel.type.value}) does not vanish at the domain endpoints "
                    f"(|k| = {np.max(ends):.3g} > {ENDPOINT_TOL})",
                    key="kernels",
                )
    samples = np.linspace(lo, hi, 33)
    for i, kernel in enumerate(spec.kernels):
        if not np.all(np.isfinite(kernel.evaluate(samples, spec.domain))):
            raise MalformedSpec(f"kernel {i} is not finite on the domain", key="kernels")


@dataclass(frozen=True)
class NullBasis:
    """Monomials 1, t, ..., t^(k-1) spanning {φ = 0}."""

    size: int

    def evaluate(self, s: Sequence[float]) -> FloatArray:
        s = np.asarray(s, dtype=float)
        return np.vstack([s**j for j in range(self.size)]) if self.size else np.zeros((0, s.size))


def null_basis(spec: ProblemSpec) -> NullBasis:
    return NullBasis(spec.null_dim)


@dataclass(frozen=True)
class MeasurementMatrixParts:
    K: FloatArray
    B: FloatArray


@dataclass(frozen=True)
class ValidationReport:
    n: int
    rank: int
    dim_hn: int
    satisfies_h0: bool
    warnings: List[str] = field(default_factory=list)


def numerical_rank(matrix: FloatArray, atol: float = 0.0) -> int:
    """Rank with singular-value cutoff max(atol, max(shape) * eps * σ_max)."""
    if matrix.size == 0:
        return 0
    singular = np.linalg.svd(matrix, compute_uv=False)
    if singular[0] <= atol or singular[0] == 0.0:
        return 0
    cutoff = max(atol, max(matrix.shape) * np.finfo(float).eps * singular[0])
    return int(np.sum(singular > cutoff))


@lru_cache(maxsize=128)
def _null_images(spec: ProblemSpec) -> FloatArray:
    images = np.zeros((spec.n, spec.null_dim))
    for i, kernel in enumerate(spec.kernels):
        for j in range(spec.null_dim):
            images[i, j] = kernel.null_moment(j, spec.domain)
    images.setflags(write=False)
    return images


def null_basis_images(spec: ProblemSpec) -> FloatArray:
    """B with B[i, j] = ∫ k_i(t) t^j dt."""
    return np.array(_null_images(spec))


def dim_quotient(spec: ProblemSpec) -> int:
    if spec.null_dim == 0:
        return spec.n
    return spec.n - numerical_rank(null_basis_images(spec), NULL_IMAGE_TOL)


def validate_problem(spec: ProblemSpec) -> ValidationReport:
    check_well_formed(spec)
    family = family_for(spec)
    images = family.images(family.parameter_grid(H0_GRID))
    rank = numerical_rank(np.hstack([images, null_basis_images(spec)]))
    warnings = []
    if rank < spec.n:
        message = (
            f"measurement operator has numerical rank {rank} < N = {spec.n} on the "
            f"{H0_GRID}-point atom grid; A(dom φ) = H may fail"
        )
        logger.warning(message)
        warnings.append(message)
    return ValidationReport(
        n=spec.n,
        rank=rank,
        dim_hn=dim_quotient(spec),
        satisfies_h0=rank == spec.n,
        warnings=warnings,
    )


class NullSpaceProjector:
    """Orthogonal projection of measurement vectors off span(B)."""

    def __init__(self, B: FloatArray):
        self.B = B
        if B.size == 0:
            self.basis = np.zeros((B.shape[0], 0))
            self._inverse = np.zeros((B.shape[1], B.shape[0]))
            return
        U, singular, Vt = np.linalg.svd(B, full_matrices=False)
        rank = numerical_rank(B, NULL_IMAGE_TOL)
        self.basis = U[:, :rank]
        # Truncated pseudo-inverse; directions below the rank cutoff get β = 0
        self._inverse = Vt[:rank].T @ (self.basis.T / singular[:rank, None])

    @classmethod
    def for_spec(cls, spec: ProblemSpec) -> "NullSpaceProjector":
        return cls(null_basis_images(spec))

    def project(self, v: FloatArray) -> FloatArray:
        if self.basis.shape[1] == 0:
            return np.array(v, dtype=float)
        return v - self.basis @ (self.basis.T @ v)

    def fit(self, target: FloatArray) -> FloatArray:
        """Minimum-norm least-squares β with Bβ ≈ target."""
        return self._inverse @ np.asarray(target, dtype=float)


def measurement_parts(spec: ProblemSpec, solution: SparseSolution) -> MeasurementMatrixParts:
    return MeasurementMatrixParts(
        K=family_for(spec).signed_images(solution),
        B=null_basis_images(spec),
    )


def forward(spec: ProblemSpec, solution: SparseSolution) -> FloatArray:
    """Aū = Kγ + Bβ."""
    parts = measurement_parts(spec, solution)
    value = parts.K @ solution.weights if solution.p else np.zeros(spec.n)
    if spec.null_dim and solution.beta.size:
        value = value + parts.B @ solution.beta
    return value


def fidelity_value(spec: ProblemSpec, v: FloatArray) -> float:
    return spec.fidelity.value(np.asarray(v, dtype=float), spec.y)


def fidelity_gradient(spec: ProblemSpec, v: FloatArray) -> FloatArray:
    return spec.fidelity.gradient(np.asarray(v, dtype=float), spec.y)


def fidelity_conjugate(spec: ProblemSpec, w: FloatArray) -> float:
    return spec.fidelity.conjugate(np.asarray(w, dtype=float), spec.y)


def objective(spec: ProblemSpec, solution: SparseSolution) -> float:
    """J(ū) = Σ γ_i + F(Aū); exact because distinct atoms cannot cancel."""
    family_for(spec).check_distinct(solution)
    return solution.total_mass + fidelity_value(spec, forward(spec, solution))


def dual_vector(
    spec: ProblemSpec, solution: SparseSolution, projector: Optional[NullSpaceProjector] = None
) -> FloatArray:
    """w = P_⊥ λ(y - Aū), the certificate candidate representing an element of H_N."""
    projector = projector or NullSpaceProjector.for_spec(spec)
    return projector.project(-fidelity_gradient(spec, forward(spec, solution)))
