import numpy as np
import pytest
from scipy.integrate import simpson

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.core_model import (
    Kind,
    NullSpaceProjector,
    ProblemSpec,
    dim_quotient,
    dual_vector,
    fidelity_conjugate,
    fidelity_gradient,
    fidelity_value,
    forward,
    null_basis,
    null_basis_images,
    numerical_rank,
    objective,
    validate_problem,
)
from exsparse.errors import DuplicateAtoms, MalformedSpec
from exsparse.kernels import Kernel

from conftest import UNIT


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind=Kind.MEASURES, domain=(1.0, 0.0), kernels=[Kernel.sine_bump()], data=[1.0], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[], data=[], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.sine_bump()], data=[1.0, 2.0], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.sine_bump()], data=[np.nan], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.sine_bump()], data=[1.0], lam=0.0),
        dict(kind=Kind.SPLINE, domain=UNIT, kernels=[Kernel.constant()], data=[1.0], lam=1.0),
        dict(kind=Kind.TV1D, domain=UNIT, kernels=[Kernel.constant()], data=[1.0], lam=1.0, spline_order=2),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.cell(0.2, 0.4)], data=[1.0], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.fourier_cos(1)], data=[1.0], lam=1.0),
        dict(kind=Kind.MEASURES, domain=UNIT, kernels=[Kernel.gaussian(0.5, 0.3)], data=[1.0], lam=1.0),
    ],
)
def test_malformed_specs_are_rejected(kwargs):
    with pytest.raises(MalformedSpec):
        ProblemSpec.build(**kwargs)


def test_measures_accept_kernels_vanishing_at_endpoints():
    spec = ProblemSpec.build(
        Kind.MEASURES,
        UNIT,
        [Kernel.sine_bump(), Kernel.fourier_sin(3), Kernel.gaussian(0.5, 0.03)],
        [0.0, 0.0, 0.0],
        1.0,
    )
    assert spec.n == 3
    assert spec.null_dim == 0
    assert dim_quotient(spec) == 3


def test_null_dimensions():
    tv = ProblemSpec.build(Kind.TV1D, UNIT, [Kernel.constant(), Kernel.fourier_cos(1)], [0, 0], 1.0)
    spline = ProblemSpec.build(
        Kind.SPLINE, UNIT, [Kernel.constant(), Kernel.fourier_cos(1), Kernel.fourier_sin(1)], [0, 0, 0], 1.0, 2
    )
    assert (tv.null_dim, tv.atom_order) == (1, 1)
    assert (spline.null_dim, spline.atom_order) == (2, 2)
    # fourier_cos(1) integrates to zero against constants, the constant kernel does not
    assert dim_quotient(tv) == 1
    assert dim_quotient(spline) == 1


def test_dim_quotient_drops_when_null_images_vanish():
    spec = ProblemSpec.build(Kind.TV1D, UNIT, [Kernel.fourier_cos(1), Kernel.fourier_sin(2)], [0, 0], 1.0)
    np.testing.assert_allclose(null_basis_images(spec), 0.0, atol=1e-12)
    assert dim_quotient(spec) == 2


def test_null_basis_images_are_monomial_moments():
    spec = ProblemSpec.build(Kind.SPLINE, UNIT, [Kernel.constant(), Kernel.polynomial([0, 1])], [0, 0], 1.0, 3)
    np.testing.assert_allclose(
        null_basis_images(spec), [[1.0, 1 / 2, 1 / 3], [1 / 2, 1 / 3, 1 / 4]], atol=1e-12
    )


def test_null_basis_images_copy_is_writable():
    spec = ProblemSpec.build(Kind.TV1D, UNIT, [Kernel.constant()], [0.0], 1.0)
    images = null_basis_images(spec)
    images[0, 0] = 42.0
    assert null_basis_images(spec)[0, 0] == pytest.approx(1.0)


def test_null_basis_evaluate():
    values = null_basis(ProblemSpec.build(Kind.SPLINE, UNIT, [Kernel.constant()], [0], 1.0, 3)).evaluate([2.0])
    np.testing.assert_allclose(values[:, 0], [1.0, 2.0, 4.0])


def test_numerical_rank():
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.zeros((3, 0))) == 0
    assert numerical_rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1
    assert numerical_rank(np.eye(4)) == 4


def test_validate_problem_flags_rank_deficiency(caplog):
    spec = ProblemSpec.build(Kind.MEASURES, UNIT, [Kernel.sine_bump(), Kernel.sine_bump()], [1.0, 1.0], 1.0)
    report = validate_problem(spec)
    assert report.rank == 1
    assert not report.satisfies_h0
    assert report.warnings
    assert "numerical rank" in caplog.text


def test_validate_problem_ok(gaussian_tv1d_spec):
    report = validate_problem(gaussian_tv1d_spec)
    assert report.satisfies_h0
    assert report.rank == 6
    assert report.dim_hn == 5
    assert report.warnings == []


def test_projector_removes_null_component(rng):
    B = rng.standard_normal((5, 2))
    projector = NullSpaceProjector(B)
    v = rng.standard_normal(5)
    projected = projector.project(v)
    np.testing.assert_allclose(B.T @ projected, 0.0, atol=1e-12)
    np.testing.assert_allclose(projector.project(projected), projected, atol=1e-12)
    delta = rng.standard_normal(2)
    np.testing.assert_allclose(projector.fit(B @ delta), delta, atol=1e-10)
    columns = rng.standard_normal((5, 3))
    np.testing.assert_allclose(projector.project(columns)[:, 1], projector.project(columns[:, 1]), atol=1e-12)


def test_forward_objective_and_dual(constant_tv1d_spec):
    family = family_for(constant_tv1d_spec)
    solution = SparseSolution.build([(family.make_atom(0.25, 1), 2.0)], [0.5])
    # k ≡ 1: ∫ 0.5 + 2·χ(0.25, 1) = 0.5 + 1.5
    np.testing.assert_allclose(forward(constant_tv1d_spec, solution), [2.0])
    assert objective(constant_tv1d_spec, solution) == pytest.approx(2.0 + 0.5 * 10.0 * 1.0)
    # The single measurement lies in span(B), so the projected dual vanishes
    np.testing.assert_allclose(dual_vector(constant_tv1d_spec, solution), [0.0], atol=1e-12)


def test_fidelity_pieces(sine_spec):
    v = np.array([1.5])
    assert fidelity_value(sine_spec, v) == pytest.approx(0.5 * 1e6 * 0.25)
    np.testing.assert_allclose(fidelity_gradient(sine_spec, v), [1e6 * -0.5])
    w = np.array([3.0])
    assert fidelity_conjugate(sine_spec, w) == pytest.approx(9.0 / 2e6 + 6.0)


def test_objective_requires_distinct_atoms(sine_spec):
    family = family_for(sine_spec)
    solution = SparseSolution.build([(family.make_atom(0.5, 1), 1.0), (family.make_atom(0.5, 1), 1.0)])
    with pytest.raises(DuplicateAtoms):
        objective(sine_spec, solution)


def test_with_data_keeps_everything_else(sine_spec):
    shifted = sine_spec.with_data([3.0])
    assert shifted.data == (3.0,)
    assert shifted.kernels == sine_spec.kernels
    assert shifted.lam == sine_spec.lam


def test_fenchel_young_on_samples(gaussian_tv1d_spec, rng):
    spec = gaussian_tv1d_spec.with_data(rng.uniform(-1, 1, 6))
    for _ in range(50):
        v = rng.uniform(-2, 2, 6)
        w = rng.uniform(-50, 50, 6)
        assert fidelity_value(spec, v) + fidelity_conjugate(spec, w) >= v @ w - 1e-9 * (1 + abs(v @ w))
        # Equality holds exactly at w = ∇F(v)
        g = fidelity_gradient(spec, v)
        tight = fidelity_value(spec, v) + fidelity_conjugate(spec, g) - v @ g
        assert tight == pytest.approx(0.0, abs=1e-9 * (1 + abs(v @ g)))


def test_fidelity_gradient_matches_central_differences(gaussian_tv1d_spec, rng):
    spec = gaussian_tv1d_spec.with_data(rng.uniform(-1, 1, 6))
    h = 1e-6
    for _ in range(10):
        v = rng.uniform(-2, 2, 6)
        numeric = np.array(
            [
                (fidelity_value(spec, v + h * e) - fidelity_value(spec, v - h * e)) / (2 * h)
                for e in np.eye(6)
            ]
        )
        np.testing.assert_allclose(fidelity_gradient(spec, v), numeric, rtol=1e-6, atol=1e-6)


def test_null_basis_images_stable_under_step_halving():
    kernels = [
        Kernel.gaussian(0.3, 0.05),
        Kernel.fourier_cos(3),
        Kernel.sine_bump(),
        Kernel.polynomial([1, -2, 0.5]),
    ]
    spec = ProblemSpec.build(Kind.SPLINE, UNIT, kernels, [0.0] * 4, 1.0, 3)
    images = null_basis_images(spec)
    for points in (4097, 8193):
        t = np.linspace(0.0, 1.0, points)
        for i, kernel in enumerate(kernels):
            values = kernel.evaluate(t, spec.domain)
            composite = [simpson(values * t**j, x=t) for j in range(3)]
            np.testing.assert_allclose(images[i], composite, atol=1e-9)
