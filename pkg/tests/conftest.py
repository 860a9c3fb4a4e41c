import numpy as np
import pytest

from exsparse.core_model import Kind, ProblemSpec
from exsparse.kernels import Kernel

UNIT = (0.0, 1.0)


@pytest.fixture
def sine_spec() -> ProblemSpec:
    """Single kernel sin(πt), y = [2], λ = 1e6; optimum is one Dirac at 0.5 of mass 1.999999."""
    return ProblemSpec.build(Kind.MEASURES, UNIT, [Kernel.sine_bump()], [2.0], 1e6)


@pytest.fixture
def constant_tv1d_spec() -> ProblemSpec:
    return ProblemSpec.build(Kind.TV1D, UNIT, [Kernel.constant()], [1.0], 10.0)


@pytest.fixture
def gaussian_tv1d_spec() -> ProblemSpec:
    kernels = [Kernel.gaussian(c, 0.12) for c in np.linspace(0.1, 0.9, 6)]
    return ProblemSpec.build(Kind.TV1D, UNIT, kernels, [0.0] * 6, 100.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.MT19937(1234))
