import math

import numpy as np
import pytest

from exsparse.errors import MalformedSpec, ProblemFileError, QuadratureFailure
from exsparse.kernels import (
    Domain,
    Kernel,
    KernelType,
    adaptive_integral,
    kernel_derivative_matrix,
    kernel_matrix,
)

UNIT = Domain(0.0, 1.0)

KERNELS = [
    Kernel.gaussian(0.4, 0.1),
    Kernel.gaussian(0.9, 0.3),
    Kernel.fourier_cos(0),
    Kernel.fourier_cos(3),
    Kernel.fourier_sin(2),
    Kernel.cell(0.2, 0.6),
    Kernel.sine_bump(),
    Kernel.polynomial([1.0, -2.0, 0.5]),
]


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.type.value)
@pytest.mark.parametrize("order", [1, 2, 3])
def test_closed_form_pairing_matches_quadrature(kernel, order):
    xs = np.array([0.05, 0.31, 0.5, 0.77, 0.95])
    closed = kernel.pairing(xs, order, UNIT)
    for x, value in zip(xs, closed):
        assert value == pytest.approx(kernel.pairing_by_quadrature(x, order, UNIT), abs=1e-9)


def test_pairing_on_shifted_domain():
    domain = Domain(-1.0, 2.0)
    kernel = Kernel.fourier_cos(2)
    for x in [-0.5, 0.3, 1.7]:
        assert kernel.pairing(np.array([x]), 2, domain)[0] == pytest.approx(
            kernel.pairing_by_quadrature(x, 2, domain), abs=1e-9
        )


def test_known_pairings():
    assert Kernel.fourier_cos(1).pairing(np.array([0.25]), 1, UNIT)[0] == pytest.approx(
        -1.0 / (2.0 * math.pi), abs=1e-12
    )
    constant = Kernel.constant()
    assert constant.pairing(np.array([0.25]), 1, UNIT)[0] == pytest.approx(0.75)
    assert constant.pairing(np.array([0.0]), 2, UNIT)[0] == pytest.approx(0.5)
    assert constant.pairing(np.array([0.5]), 2, UNIT)[0] == pytest.approx(0.125)
    assert Kernel.sine_bump().pairing(np.array([0.5]), 0, UNIT)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("kernel", [k for k in KERNELS if k.type != KernelType.CELL], ids=lambda k: k.type.value)
def test_derivative_matches_finite_difference(kernel):
    t = np.linspace(0.03, 0.97, 25)
    h = 1e-6
    numeric = (kernel.evaluate(t + h, UNIT) - kernel.evaluate(t - h, UNIT)) / (2 * h)
    np.testing.assert_allclose(kernel.derivative(t, UNIT), numeric, atol=1e-5 * (1 + kernel.freq))


@pytest.mark.parametrize("order", [1, 2, 3])
def test_pairing_derivative_lowers_order(order):
    kernels = [k for k in KERNELS if k.type != KernelType.CELL]
    x = np.array([0.2, 0.45, 0.8])
    h = 1e-6
    numeric = (kernel_matrix(kernels, x + h, order, UNIT) - kernel_matrix(kernels, x - h, order, UNIT)) / (2 * h)
    np.testing.assert_allclose(kernel_derivative_matrix(kernels, x, order, UNIT), numeric, atol=1e-6)


def test_kernel_matrix_shape_and_columns():
    x = np.linspace(0.1, 0.9, 7)
    matrix = kernel_matrix(KERNELS, x, 1, UNIT)
    assert matrix.shape == (len(KERNELS), 7)
    np.testing.assert_array_equal(matrix[3], KERNELS[3].pairing(x, 1, UNIT))


def test_kernel_matrix_does_not_depend_on_worker_count(monkeypatch):
    x = np.linspace(0.0, 1.0, 10000)
    monkeypatch.setenv("EXSPARSE_THREADS", "1")
    serial = kernel_matrix(KERNELS, x, 2, UNIT)
    monkeypatch.setenv("EXSPARSE_THREADS", "4")
    threaded = kernel_matrix(KERNELS, x, 2, UNIT)
    np.testing.assert_array_equal(serial, threaded)


def test_null_moments():
    assert Kernel.constant().null_moment(0, UNIT) == pytest.approx(1.0)
    assert Kernel.constant().null_moment(2, UNIT) == pytest.approx(1.0 / 3.0)
    assert Kernel.cell(0.2, 0.6).null_moment(1, UNIT) == pytest.approx((0.36 - 0.04) / 2)
    assert Kernel.sine_bump().null_moment(0, UNIT) == pytest.approx(2.0 / math.pi)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.type.value)
def test_descriptor_round_trip(kernel):
    assert Kernel.from_dict(kernel.to_dict()) == kernel


@pytest.mark.parametrize(
    "descriptor, key",
    [
        ({"center": 0.5}, "kernels[0].type"),
        ({"type": "wavelet"}, "kernels[0].type"),
        ({"type": "gaussian", "center": 0.5}, "kernels[0].width"),
        ({"type": "fourier_cos", "freq": 1.5}, "kernels[0].freq"),
    ],
)
def test_descriptor_errors_name_the_field(descriptor, key):
    with pytest.raises(ProblemFileError) as info:
        Kernel.from_dict(descriptor, where="kernels[0]")
    assert info.value.key == key


@pytest.mark.parametrize(
    "build",
    [
        lambda: Kernel.gaussian(0.5, 0.0),
        lambda: Kernel.cell(0.6, 0.2),
        lambda: Kernel.fourier_sin(-1),
        lambda: Kernel.polynomial([]),
    ],
)
def test_invalid_kernels_are_rejected(build):
    with pytest.raises(MalformedSpec):
        build()


def test_adaptive_integral():
    assert adaptive_integral(np.cos, 0.0, math.pi / 2) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(QuadratureFailure):
        adaptive_integral(lambda t: 1.0 / t, 0.0, 1.0)
