"""Nonnegative ℓ1-penalized least squares, min Σγ + (λ/2)‖Kγ - y‖² over γ >= 0.

The fully-corrective step and the grid oracle both land here once the
null-space coefficients have been projected out. An accelerated projected
gradient phase locates the support; the finish is exact. For a mass offset s
the stacked NNLS

    γ(s) = argmin_{γ >= 0} ½‖[√λ K; 1ᵀ] γ - [√λ y; s]‖²

has the optimality conditions of the original problem precisely when
Σγ(s) = 1 + s, and s ↦ Σγ(s) - 1 - s is nonincreasing, so a scalar root
find on s recovers the exact minimizer.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, nnls

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

WARM_ITERS = 200
MASS_XTOL = 1e-14
MASS_ROOT_ITERS = 200


@dataclass(frozen=True)
class WeightProblem:
    """min Σγ + (λ/2)‖Kγ - y‖² over γ >= 0."""

    K: FloatArray
    y: FloatArray
    lam: float

    @property
    def size(self) -> int:
        return int(self.K.shape[1])

    def value(self, gamma: FloatArray) -> float:
        residual = self.K @ gamma - self.y
        return float(np.sum(gamma)) + 0.5 * self.lam * float(residual @ residual)

    def gradient(self, gamma: FloatArray) -> FloatArray:
        return 1.0 + self.lam * (self.K.T @ (self.K @ gamma - self.y))

    def projected_gradient_norm(self, gamma: FloatArray) -> float:
        grad = self.gradient(gamma)
        return float(np.linalg.norm(np.where(gamma > 0, grad, np.minimum(grad, 0.0))))

    def polish(self, gamma: FloatArray) -> Optional[FloatArray]:
        """Exact KKT solve on the support of gamma, or None if it leaves the orthant.

        Solves Ksᵀ(Ks γ - y) = -1/λ as two least-squares problems on Ks so the
        conditioning is that of Ks, not of its Gram matrix.
        """
        support = gamma > 0
        candidate = np.zeros_like(gamma)
        if support.any():
            Ks = self.K[:, support]
            shift, *_ = np.linalg.lstsq(Ks.T, np.full(int(support.sum()), 1.0 / self.lam), rcond=None)
            solved, *_ = np.linalg.lstsq(Ks, self.y - shift, rcond=None)
            if np.any(solved <= 0):
                return None
            candidate[support] = solved
        return candidate

    def accelerated(self, start: FloatArray, tol: float, max_iters: int) -> Tuple[FloatArray, bool]:
        """FISTA with adaptive restart; returns the best iterate and whether it met tol."""
        x = np.maximum(np.asarray(start, dtype=float), 0.0)
        if self.projected_gradient_norm(x) <= tol:
            return x, True
        lipschitz = self.lam * np.linalg.norm(self.K, 2) ** 2
        if lipschitz == 0.0:
            # Gradient is identically 1, so γ = 0 is optimal
            return np.zeros_like(x), True
        best, best_value = x.copy(), self.value(x)
        z = x.copy()
        t = 1.0
        x_value = best_value
        for _ in range(max_iters):
            x_new = np.maximum(z - self.gradient(z) / lipschitz, 0.0)
            new_value = self.value(x_new)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            if new_value > x_value:
                z, t_new = x_new.copy(), 1.0
            else:
                z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, x_value, t = x_new, new_value, t_new
            if x_value < best_value:
                best, best_value = x.copy(), x_value
            if x_value <= best_value and self.projected_gradient_norm(x) <= tol:
                return x, True
        return best, False

    def mass_matched(self, offset: float) -> FloatArray:
        """NNLS fit of the stacked system [√λ K; 1ᵀ] γ ≈ [√λ y; offset]."""
        root_lam = np.sqrt(self.lam)
        system = np.vstack([root_lam * self.K, np.ones((1, self.size))])
        target = np.append(root_lam * self.y, offset)
        gamma, _ = nnls(system, target, maxiter=max(50 * self.size, 1000))
        return gamma

    def exact(self, mass_guess: float = 0.0) -> FloatArray:
        """Minimizer by root-finding the mass offset of `mass_matched`.

        The optimal mass never exceeds the objective at γ = 0, which caps the
        bracket; `mass_guess` only seeds where the bracket search starts.
        """
        if self.size == 0:
            return np.zeros(0)

        def excess(offset: float) -> float:
            return float(np.sum(self.mass_matched(offset))) - 1.0 - offset

        lo = -1.0
        if excess(lo) <= 0.0:
            return np.zeros(self.size)
        ceiling = max(self.value(np.zeros(self.size)) - 1.0, 0.0)
        hi = min(max(mass_guess - 1.0, 0.0), ceiling)
        while excess(hi) > 0.0:
            if hi >= ceiling:
                logger.debug(f"mass bracket saturated at {ceiling:.6g}")
                return self.mass_matched(hi)
            lo, hi = hi, min(2.0 * hi + 1.0, ceiling)
        offset = brentq(excess, lo, hi, xtol=MASS_XTOL * (1.0 + abs(hi)), maxiter=MASS_ROOT_ITERS)
        return self.mass_matched(offset)

    def solve(
        self, start: FloatArray, tol: float, max_iters: int, warm_iters: int = WARM_ITERS
    ) -> Tuple[FloatArray, bool]:
        """Minimize to projected-gradient norm <= tol.

        A short accelerated phase seeds the exact finish; if neither the exact
        point nor its polish meets tol the accelerated phase resumes from the
        best candidate with the remaining iteration budget.
        """
        if self.size == 0:
            return np.zeros(0), True
        warm_iters = min(warm_iters, max_iters)
        warm, converged = self.accelerated(start, tol, warm_iters)
        if converged:
            return warm, True

        candidates = [warm]
        finished = self.exact(float(np.sum(warm)))
        candidates.append(finished)
        for seed in (finished, warm):
            polished = self.polish(seed)
            if polished is not None:
                candidates.append(polished)
        candidates.sort(key=self.value)
        for candidate in candidates:
            if self.projected_gradient_norm(candidate) <= tol:
                return candidate, True

        best = candidates[0]
        logger.debug(
            f"exact finish missed tolerance {tol:.3g} "
            f"(projected gradient {self.projected_gradient_norm(best):.3g})"
        )
        remaining = max_iters - warm_iters
        if remaining <= 0:
            return best, False
        return self.accelerated(best, tol, remaining)
