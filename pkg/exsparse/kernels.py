"""Measurement kernels and their closed-form pairings with the atom families.

Every measurement is a functional a_i(u) = ∫ k_i u (or k_i(x) for a Dirac).
The central quantity is the truncated-power pairing

    P_q(k, x) = ∫_x^hi k(s) (s - x)^(q-1) / (q-1)! ds      (q >= 1)
    P_0(k, x) = k(x)

which covers Dirac (q = 0), step (q = 1) and D^q Green's-function atoms, with
d/dx P_q = -P_(q-1).
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, NamedTuple, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad
from scipy.special import erf

from exsparse.errors import MalformedSpec, ProblemFileError, QuadratureFailure
from exsparse.parallel import map_columns

FloatArray = NDArray[np.float64]

QUAD_TOL = 1e-10


class Domain(NamedTuple):
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo


class KernelType(Enum):
    GAUSSIAN = "gaussian"
    FOURIER_COS = "fourier_cos"
    FOURIER_SIN = "fourier_sin"
    CELL = "cell"
    SINE_BUMP = "sine_bump"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class Kernel:
    type: KernelType
    center: float = 0.0
    width: float = 1.0
    freq: int = 0
    a: float = 0.0
    b: float = 0.0
    coeffs: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        match self.type:
            case KernelType.GAUSSIAN:
                if not (np.isfinite(self.center) and np.isfinite(self.width)):
                    raise MalformedSpec("gaussian kernel needs finite center and width")
                if self.width <= 0:
                    raise MalformedSpec(f"gaussian width must be positive, got {self.width}")
            case KernelType.FOURIER_COS | KernelType.FOURIER_SIN:
                if self.freq < 0:
                    raise MalformedSpec(f"fourier frequency must be >= 0, got {self.freq}")
            case KernelType.CELL:
                if not self.a < self.b:
                    raise MalformedSpec(f"cell kernel needs a < b, got ({self.a}, {self.b})")
            case KernelType.POLYNOMIAL:
                if len(self.coeffs) == 0 or not all(np.isfinite(self.coeffs)):
                    raise MalformedSpec("polynomial kernel needs a non-empty list of finite coeffs")

    @classmethod
    def gaussian(cls, center: float, width: float) -> "Kernel":
        return cls(KernelType.GAUSSIAN, center=float(center), width=float(width))

    @classmethod
    def fourier_cos(cls, freq: int) -> "Kernel":
        return cls(KernelType.FOURIER_COS, freq=int(freq))

    @classmethod
    def fourier_sin(cls, freq: int) -> "Kernel":
        return cls(KernelType.FOURIER_SIN, freq=int(freq))

    @classmethod
    def cell(cls, a: float, b: float) -> "Kernel":
        return cls(KernelType.CELL, a=float(a), b=float(b))

    @classmethod
    def sine_bump(cls) -> "Kernel":
        return cls(KernelType.SINE_BUMP)

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "Kernel":
        return cls(KernelType.POLYNOMIAL, coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def constant(cls, value: float = 1.0) -> "Kernel":
        return cls.polynomial([value])

    @classmethod
    def from_dict(cls, descriptor: Mapping[str, Any], where: str = "kernel") -> "Kernel":
        if not isinstance(descriptor, Mapping):
            raise ProblemFileError("kernel descriptor must be an object", key=where)
        if "type" not in descriptor:
            raise ProblemFileError("missing kernel type", key=f"{where}.type")
        try:
            kernel_type = KernelType(descriptor["type"])
        except ValueError:
            raise ProblemFileError(
                f"unknown kernel type {descriptor['type']!r}", key=f"{where}.type"
            ) from None

        def field(name: str) -> Any:
            if name not in descriptor:
                raise ProblemFileError("missing field", key=f"{where}.{name}")
            return descriptor[name]

        try:
            match kernel_type:
                case KernelType.GAUSSIAN:
                    return cls.gaussian(float(field("center")), float(field("width")))
                case KernelType.FOURIER_COS:
                    return cls.fourier_cos(_as_int(field("freq"), f"{where}.freq"))
                case KernelType.FOURIER_SIN:
                    return cls.fourier_sin(_as_int(field("freq"), f"{where}.freq"))
                case KernelType.CELL:
                    return cls.cell(float(field("a")), float(field("b")))
                case KernelType.SINE_BUMP:
                    return cls.sine_bump()
                case KernelType.POLYNOMIAL:
                    coeffs = field("coeffs")
                    if not isinstance(coeffs, list):
                        raise ProblemFileError("coeffs must be a list", key=f"{where}.coeffs")
                    return cls.polynomial([float(c) for c in coeffs])
        except (TypeError, ValueError) as e:
            raise ProblemFileError(f"bad kernel field: {e}", key=where) from None
        except ProblemFileError:
            raise
        except MalformedSpec as e:
            raise ProblemFileError(str(e), key=where) from None

    def to_dict(self) -> Dict[str, Any]:
        match self.type:
            case KernelType.GAUSSIAN:
                return {"type": self.type.value, "center": self.center, "width": self.width}
            case KernelType.FOURIER_COS | KernelType.FOURIER_SIN:
                return {"type": self.type.value, "freq": self.freq}
            case KernelType.CELL:
                return {"type": self.type.value, "a": self.a, "b": self.b}
            case KernelType.SINE_BUMP:
                return {"type": self.type.value}
            case KernelType.POLYNOMIAL:
                return {"type": self.type.value, "coeffs": list(self.coeffs)}

    def _oscillation(self, domain: Domain) -> Tuple[float, bool]:
        """Angular frequency and whether the kernel is the imaginary part of e^{iω(t-lo)}."""
        match self.type:
            case KernelType.FOURIER_COS:
                return 2.0 * np.pi * self.freq / domain.length, False
            case KernelType.FOURIER_SIN:
                return 2.0 * np.pi * self.freq / domain.length, True
            case KernelType.SINE_BUMP:
                return np.pi / domain.length, True
        raise ValueError(f"{self.type} is not oscillatory")

    def evaluate(self, t: Any, domain: Domain) -> FloatArray:
        t = np.asarray(t, dtype=float)
        match self.type:
            case KernelType.GAUSSIAN:
                return np.exp(-((t - self.center) ** 2) / (2.0 * self.width**2))
            case KernelType.FOURIER_COS:
                omega, _ = self._oscillation(domain)
                return np.cos(omega * (t - domain.lo))
            case KernelType.FOURIER_SIN | KernelType.SINE_BUMP:
                omega, _ = self._oscillation(domain)
                return np.sin(omega * (t - domain.lo))
            case KernelType.CELL:
                return ((t > self.a) & (t < self.b)).astype(float)
            case KernelType.POLYNOMIAL:
                return np.polynomial.polynomial.polyval(t, self.coeffs) * np.ones_like(t)

    def derivative(self, t: Any, domain: Domain) -> FloatArray:
        t = np.asarray(t, dtype=float)
        match self.type:
            case KernelType.GAUSSIAN:
                return -(t - self.center) / self.width**2 * self.evaluate(t, domain)
            case KernelType.FOURIER_COS:
                omega, _ = self._oscillation(domain)
                return -omega * np.sin(omega * (t - domain.lo))
            case KernelType.FOURIER_SIN | KernelType.SINE_BUMP:
                omega, _ = self._oscillation(domain)
                return omega * np.cos(omega * (t - domain.lo))
            case KernelType.CELL:
                return np.zeros_like(t)
            case KernelType.POLYNOMIAL:
                deriv = np.polynomial.polynomial.polyder(self.coeffs)
                return np.polynomial.polynomial.polyval(t, deriv) * np.ones_like(t)

    def pairing(self, x: Any, order: int, domain: Domain) -> FloatArray:
        """P_order(k, x), vectorized over x."""
        if order == 0:
            return self.evaluate(x, domain)
        x = np.asarray(x, dtype=float)
        m = order - 1
        match self.type:
            case KernelType.GAUSSIAN:
                return self._gaussian_pairing(x, m, domain)
            case KernelType.FOURIER_COS | KernelType.FOURIER_SIN | KernelType.SINE_BUMP:
                return self._oscillatory_pairing(x, m, domain)
            case KernelType.CELL:
                lo_edge = max(self.a, domain.lo)
                hi_edge = min(self.b, domain.hi)
                if hi_edge <= lo_edge:
                    return np.zeros_like(x)
                upper = np.maximum(hi_edge, x) - x
                lower = np.maximum(lo_edge, x) - x
                return (upper**order - lower**order) / math.factorial(order)
            case KernelType.POLYNOMIAL:
                return self._polynomial_pairing(x, m, domain)

    def _gaussian_pairing(self, x: FloatArray, m: int, domain: Domain) -> FloatArray:
        sigma = self.width
        lower = x - self.center
        upper = domain.hi - self.center
        e_lower = np.exp(-(lower**2) / (2.0 * sigma**2))
        e_upper = np.exp(-(upper**2) / (2.0 * sigma**2))
        # Moments G_l = ∫ u^l exp(-u²/2σ²) du over (x - c, hi - c)
        moments: List[FloatArray] = [
            sigma
            * np.sqrt(np.pi / 2.0)
            * (erf(upper / (sigma * np.sqrt(2.0))) - erf(lower / (sigma * np.sqrt(2.0)))),
            sigma**2 * (e_lower - e_upper),
        ]
        for ell in range(2, m + 1):
            moments.append(
                sigma**2
                * (
                    (ell - 1) * moments[ell - 2]
                    + lower ** (ell - 1) * e_lower
                    - upper ** (ell - 1) * e_upper
                )
            )
        offset = self.center - x
        total = np.zeros_like(x)
        for ell in range(m + 1):
            total = total + math.comb(m, ell) * offset ** (m - ell) * moments[ell]
        return total / math.factorial(m)

    def _oscillatory_pairing(self, x: FloatArray, m: int, domain: Domain) -> FloatArray:
        omega, imaginary = self._oscillation(domain)
        span = domain.hi - x
        if omega == 0.0:
            if imaginary:
                return np.zeros_like(x)
            return span ** (m + 1) / math.factorial(m + 1)
        # I_j = ∫_0^D e^{iωr} r^j / j! dr by integration by parts
        rotation = np.exp(1j * omega * span)
        integral = (rotation - 1.0) / (1j * omega)
        for j in range(1, m + 1):
            integral = (rotation * span**j / math.factorial(j) - integral) / (1j * omega)
        value = np.exp(1j * omega * (x - domain.lo)) * integral
        return value.imag if imaginary else value.real

    def _polynomial_pairing(self, x: FloatArray, m: int, domain: Domain) -> FloatArray:
        span = domain.hi - x
        total = np.zeros_like(x)
        for j, coeff in enumerate(self.coeffs):
            if coeff == 0.0:
                continue
            for ell in range(j + 1):
                total = total + coeff * math.comb(j, ell) * x ** (j - ell) * span ** (
                    ell + m + 1
                ) / ((ell + m + 1) * math.factorial(m))
        return total

    def null_moment(self, power: int, domain: Domain) -> float:
        """∫_lo^hi k(t) t^power dt by adaptive quadrature."""
        lo, hi = domain
        if self.type == KernelType.CELL:
            lo, hi = max(self.a, lo), min(self.b, hi)
            if hi <= lo:
                return 0.0
            return adaptive_integral(lambda t: t**power, lo, hi)
        return adaptive_integral(
            lambda t: float(self.evaluate(t, domain)) * t**power, lo, hi
        )

    def pairing_by_quadrature(self, x: float, order: int, domain: Domain) -> float:
        """Quadrature version of `pairing` at a single point, for cross-checks."""
        if order == 0:
            return float(self.evaluate(x, domain))
        m = order - 1
        scale = math.factorial(m)
        lo, hi = x, domain.hi
        if self.type == KernelType.CELL:
            lo, hi = max(self.a, x), min(self.b, domain.hi)
            if hi <= lo:
                return 0.0
            return adaptive_integral(lambda s: (s - x) ** m / scale, lo, hi)
        return adaptive_integral(
            lambda s: float(self.evaluate(s, domain)) * (s - x) ** m / scale, lo, hi
        )


def _as_int(value: Any, key: str) -> int:
    if isinstance(value, bool) or not float(value).is_integer():
        raise ProblemFileError(f"expected an integer, got {value!r}", key=key)
    return int(value)


def adaptive_integral(integrand: Any, lo: float, hi: float, tol: float = QUAD_TOL) -> float:
    result = quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=500, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 or not np.isfinite(value) or abserr > tol * max(1.0, abs(value)):
        raise QuadratureFailure(
            f"quadrature on ({lo}, {hi}) did not reach tolerance {tol} (error estimate {abserr:.3g})"
        )
    return float(value)


def kernel_matrix(
    kernels: Sequence[Kernel], params: Any, order: int, domain: Domain
) -> FloatArray:
    """N x m matrix with entries P_order(k_i, params_j)."""
    params = np.atleast_1d(np.asarray(params, dtype=float))

    def block(chunk: FloatArray) -> FloatArray:
        return np.vstack([k.pairing(chunk, order, domain) for k in kernels])

    return map_columns(block, params)


def kernel_derivative_matrix(
    kernels: Sequence[Kernel], params: Any, order: int, domain: Domain
) -> FloatArray:
    """Derivative of `kernel_matrix` in the parameter."""
    params = np.atleast_1d(np.asarray(params, dtype=float))
    if order == 0:

        def block(chunk: FloatArray) -> FloatArray:
            return np.vstack([k.derivative(chunk, domain) for k in kernels])

        return map_columns(block, params)
    return -kernel_matrix(kernels, params, order - 1, domain)
