"""Optimality checks for a primal-dual pair (ū, w).

A pair is certified when the atom-correlation function of w stays within
[-1, 1], reaches ±1 at every active atom with the atom's sign, w is
orthogonal to the null-space images, and w equals λ(y - Aū) modulo them.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.core_model import (
    NullSpaceProjector,
    ProblemSpec,
    dual_vector,
    null_basis_images,
)

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

NULL_TOL = 1e-8


@dataclass(frozen=True)
class Certificate:
    w: Tuple[float, ...]
    sup_value: float
    sup_param: float
    grid_size: int
    active_correlations: Tuple[float, ...]
    null_residuals: Tuple[float, ...]
    fidelity_link_residual: float


@dataclass(frozen=True)
class CertificateReport:
    certificate: Certificate
    tol: float
    bounded: bool
    saturated: bool
    null_orthogonal: bool
    fidelity_linked: bool

    @property
    def passed(self) -> bool:
        return self.bounded and self.saturated and self.null_orthogonal and self.fidelity_linked

    def to_dict(self) -> Dict[str, Any]:
        cert = self.certificate
        worst_saturation = max((abs(c - 1.0) for c in cert.active_correlations), default=0.0)
        worst_null = max((abs(r) for r in cert.null_residuals), default=0.0)
        return {
            "passed": self.passed,
            "tol": self.tol,
            "grid_size": cert.grid_size,
            "bounded": {"pass": self.bounded, "sup_value": cert.sup_value, "sup_param": cert.sup_param},
            "saturated": {
                "pass": self.saturated,
                "max_deviation": worst_saturation,
                "active_correlations": list(cert.active_correlations),
            },
            "null_orthogonal": {
                "pass": self.null_orthogonal,
                "max_residual": worst_null,
                "null_residuals": list(cert.null_residuals),
            },
            "fidelity_linked": {"pass": self.fidelity_linked, "residual": cert.fidelity_link_residual},
        }


def certificate_grid(spec: ProblemSpec, grid_factor: int, lmo_grid: int) -> FloatArray:
    # grid_factor*(lmo_grid-1)+1 nodes contain the solver's own lmo grid
    return family_for(spec).parameter_grid(int(grid_factor) * (int(lmo_grid) - 1) + 1)


def sup_correlation(
    spec: ProblemSpec,
    w: Any,
    grid_factor: int = 10,
    lmo_grid: int = 1024,
    refine_iters: int = 40,
) -> Tuple[float, float, int]:
    """sup over atoms of |⟨w, A atom⟩| as (value, parameter, grid size)."""
    family = family_for(spec)
    w = np.asarray(w, dtype=float)
    grid = certificate_grid(spec, grid_factor, lmo_grid)
    sup_param, _, sup_value = family.best_peak(w, grid, refine_iters)
    return sup_value, sup_param, grid.size


def certify(
    spec: ProblemSpec,
    solution: SparseSolution,
    w: Any,
    grid_factor: int = 10,
    tol: float = 1e-6,
    lmo_grid: int = 1024,
    refine_iters: int = 40,
) -> CertificateReport:
    family = family_for(spec)
    projector = NullSpaceProjector.for_spec(spec)
    w = np.asarray(w, dtype=float)

    sup_value, sup_param, grid_size = sup_correlation(spec, w, grid_factor, lmo_grid, refine_iters)
    active = w @ family.signed_images(solution) if solution.p else np.zeros(0)
    if active.size:
        sup_value = max(sup_value, float(np.max(np.abs(active))))
    null_residuals = w @ null_basis_images(spec) if spec.null_dim else np.zeros(0)
    expected = dual_vector(spec, solution, projector)
    link = float(np.linalg.norm(w - expected))

    certificate = Certificate(
        w=tuple(float(v) for v in w),
        sup_value=sup_value,
        sup_param=sup_param,
        grid_size=grid_size,
        active_correlations=tuple(float(v) for v in active),
        null_residuals=tuple(float(v) for v in null_residuals),
        fidelity_link_residual=link,
    )
    report = CertificateReport(
        certificate=certificate,
        tol=tol,
        bounded=sup_value <= 1.0 + tol,
        saturated=bool(np.all(np.abs(active - 1.0) <= tol)),
        null_orthogonal=bool(np.all(np.abs(null_residuals) <= NULL_TOL)),
        fidelity_linked=link <= tol * spec.lam * (1.0 + float(np.linalg.norm(spec.y))),
    )
    if not report.passed:
        logger.info(
            f"certificate failed: bounded={report.bounded} saturated={report.saturated} "
            f"null_orthogonal={report.null_orthogonal} fidelity_linked={report.fidelity_linked}"
        )
    return report


def certificate_curve(spec: ProblemSpec, w: Any, grid_factor: int = 10, lmo_grid: int = 1024) -> pd.DataFrame:
    """Correlation function of w on the certificate grid, one row per parameter."""
    family = family_for(spec)
    grid = certificate_grid(spec, grid_factor, lmo_grid)
    return pd.DataFrame({"param": grid, "correlation": family.correlation(np.asarray(w, dtype=float), grid)})
