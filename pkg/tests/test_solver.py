import numpy as np
import pytest

from exsparse.atom_families import family_for
from exsparse.atoms_base import SparseSolution
from exsparse.core_model import (
    Kind,
    ProblemSpec,
    dim_quotient,
    dual_vector,
    forward,
    null_basis_images,
    objective,
)
from exsparse.demos import random_instance, spikes, staircase
from exsparse.errors import MalformedSpec, NonSaturatedAtoms, NumericalRankAmbiguity, ProblemFileError
from exsparse.kernels import Kernel
from exsparse.solver import (
    SolverOptions,
    _kernel_direction,
    caratheodory_prune,
    duality_gap,
    dual_value,
    fully_corrective_subproblem,
    lmo,
    solve,
)

from conftest import UNIT


def test_options_defaults_and_overrides():
    opts = SolverOptions()
    assert (opts.gap_tol, opts.max_iters, opts.lmo_grid, opts.refine_iters) == (1e-7, 500, 1024, 40)
    assert (opts.prune_tol, opts.subproblem_tol) == (1e-10, 1e-12)
    changed = opts.with_overrides({"max_iters": 20.0, "gap_tol": 1e-9})
    assert changed.max_iters == 20 and isinstance(changed.max_iters, int)
    assert changed.gap_tol == 1e-9


@pytest.mark.parametrize("overrides", [{"gap_tol": 0.0}, {"lmo_grid": -4}, {"lmo_grid": 1}])
def test_options_must_be_positive(overrides):
    with pytest.raises(MalformedSpec):
        SolverOptions().with_overrides(overrides)


@pytest.mark.parametrize("overrides", [{"tolerance": 1e-3}, {"max_iters": "many"}, {"max_iters": True}])
def test_bad_overrides_name_the_key(overrides):
    with pytest.raises(ProblemFileError) as info:
        SolverOptions().with_overrides(overrides)
    assert info.value.key.startswith("solver.")


def test_lmo_zero_dual(sine_spec):
    _, value = lmo(sine_spec, [0.0])
    assert value == 0.0


def test_lmo_finds_interior_peak(sine_spec):
    atom, value = lmo(sine_spec, [1.0])
    assert abs(atom.param - 0.5) <= 1e-8
    assert atom.sign == 1
    assert value == pytest.approx(1.0, abs=1e-12)
    negative, _ = lmo(sine_spec, [-1.0])
    assert negative.sign == -1


def test_lmo_boundary_peak(constant_tv1d_spec):
    atom, value = lmo(constant_tv1d_spec, [1.0])
    margin = 1e-9
    assert atom.param == pytest.approx(margin, abs=1e-15)
    assert value == pytest.approx(1.0, abs=1e-8)


def test_lmo_is_scale_invariant(gaussian_tv1d_spec, rng):
    w = rng.standard_normal(6)
    atom, value = lmo(gaussian_tv1d_spec, w)
    scaled_atom, scaled_value = lmo(gaussian_tv1d_spec, 3.5 * w)
    assert scaled_atom.param == pytest.approx(atom.param, abs=1e-9)
    assert scaled_atom.sign == atom.sign
    assert scaled_value == pytest.approx(3.5 * value, rel=1e-9)


def test_lmo_value_not_below_grid_maximum(gaussian_tv1d_spec, rng):
    family = family_for(gaussian_tv1d_spec)
    for _ in range(10):
        w = rng.standard_normal(6)
        _, value = lmo(gaussian_tv1d_spec, w)
        grid_max = np.max(np.abs(family.correlation(w, family.parameter_grid(1024))))
        assert value >= grid_max - 1e-12 * max(1.0, grid_max)


def test_subproblem_without_atoms_fits_null_space(constant_tv1d_spec):
    solution = fully_corrective_subproblem(constant_tv1d_spec, [])
    assert solution.p == 0
    np.testing.assert_allclose(solution.beta, [1.0])


def test_subproblem_single_atom_kkt(sine_spec):
    atom = family_for(sine_spec).make_atom(0.5, 1)
    solution = fully_corrective_subproblem(sine_spec, [atom])
    assert solution.p == 1
    assert solution.weights[0] == pytest.approx(2.0 - 1e-6, abs=1e-9)


def test_subproblem_zero_data_drops_atoms(sine_spec):
    spec = sine_spec.with_data([0.0])
    solution = fully_corrective_subproblem(spec, [family_for(spec).make_atom(0.5, 1)])
    assert solution.p == 0


def test_gap_with_zero_dual_is_objective(sine_spec):
    atom = family_for(sine_spec).make_atom(0.3, 1)
    solution = SparseSolution.build([(atom, 1.0)])
    assert duality_gap(sine_spec, solution, [0.0]) == pytest.approx(objective(sine_spec, solution))
    assert dual_value(sine_spec, np.zeros(1)) == 0.0


def test_analytic_instance(sine_spec):
    solution, certificate, report = solve(sine_spec)
    assert solution.p == 1
    assert abs(solution.params[0] - 0.5) <= 1e-6
    assert abs(solution.weights[0] - 1.999999) <= 1e-5
    assert report.gap <= 1e-9
    assert report.gap >= -1e-12
    assert report.objective == pytest.approx(2.0, abs=1e-5)
    assert report.certified
    assert certificate.passed
    assert report.objective - report.dual_value == pytest.approx(report.gap, abs=1e-12)


@pytest.mark.parametrize("kind", list(Kind))
def test_zero_data_gives_empty_certified_solution(kind):
    kernels = [Kernel.sine_bump(), Kernel.fourier_sin(2)]
    spec = ProblemSpec.build(kind, UNIT, kernels, [0.0, 0.0], 10.0, 2 if kind == Kind.SPLINE else None)
    solution, _, report = solve(spec)
    assert solution.p == 0
    assert report.gap == pytest.approx(0.0, abs=1e-12)
    assert report.certified


@pytest.fixture
def collinear():
    """Five atoms that all saturate w = [1, 0, 0] (sin(10πx) = 1) under three measurements."""
    spec = ProblemSpec.build(
        Kind.MEASURES,
        UNIT,
        [Kernel.fourier_sin(5), Kernel.fourier_sin(1), Kernel.fourier_sin(2)],
        [0.0, 0.0, 0.0],
        1e3,
    )
    family = family_for(spec)
    weights = [1.0, 0.5, 2.0, 1.5, 0.8]
    atoms = [(family.make_atom(x, 1), g) for x, g in zip([0.05, 0.25, 0.45, 0.65, 0.85], weights)]
    solution = SparseSolution.build(atoms)
    return spec.with_data(forward(spec, solution)), solution


def test_prune_collinear_instance(collinear):
    spec, solution = collinear
    assert dim_quotient(spec) == 3
    pruned = caratheodory_prune(spec, solution, [1.0, 0.0, 0.0])
    assert pruned.p <= 3
    assert np.all(pruned.weights > 0)
    assert np.linalg.norm(forward(spec, pruned) - forward(spec, solution)) <= 1e-10
    assert abs(pruned.total_mass - solution.total_mass) <= 1e-10
    assert abs(objective(spec, pruned) - objective(spec, solution)) <= 1e-9


def test_prune_refuses_unsaturated_atoms(collinear):
    spec, solution = collinear
    with pytest.raises(NonSaturatedAtoms):
        caratheodory_prune(spec, solution, [0.5, 0.0, 0.0])
    relaxed = caratheodory_prune(spec, solution, [0.5, 0.0, 0.0], require_saturation=False)
    assert relaxed.p <= 4
    assert abs(relaxed.total_mass - solution.total_mass) <= 1e-10


def test_prune_leaves_small_solutions_alone(sine_spec):
    solution = SparseSolution.build([(family_for(sine_spec).make_atom(0.5, 1), 1.0)])
    assert caratheodory_prune(sine_spec, solution, [3.0]) == solution


def test_prune_merges_duplicates_first(sine_spec):
    family = family_for(sine_spec)
    solution = SparseSolution.build([(family.make_atom(0.5, 1), 1.0), (family.make_atom(0.5, 1), 1.0)])
    pruned = caratheodory_prune(sine_spec, solution, [1.0])
    assert pruned.p == 1
    assert pruned.weights[0] == pytest.approx(2.0)


def test_staircase_solution_structure():
    spec = staircase(7).spec
    _, certificate, report = solve(spec)
    assert report.dim_hn == 5
    assert report.p <= report.dim_hn + 1
    assert report.gap >= -1e-12
    objectives = [entry.objective for entry in report.trace]
    assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(objectives, objectives[1:]))
    assert report.certified
    assert certificate.passed
    assert report.p <= report.dim_hn
    assert report.gap <= 10 * 1e-6 * (1 + abs(report.objective))


def test_null_shift_covariance(rng):
    spec = staircase(3).spec
    base, _, base_report = solve(spec)
    delta = rng.uniform(-1, 1, 1)
    shifted_spec = spec.with_data(spec.y + null_basis_images(spec) @ delta)
    shifted, _, shifted_report = solve(shifted_spec)
    assert shifted.p == base.p
    np.testing.assert_allclose(np.sort(shifted.params), np.sort(base.params), atol=1e-6)
    order_a, order_b = np.argsort(base.params), np.argsort(shifted.params)
    np.testing.assert_allclose(shifted.weights[order_b], base.weights[order_a], atol=1e-8)
    np.testing.assert_allclose(shifted.beta - base.beta, delta, atol=1e-8)
    assert shifted_report.objective == pytest.approx(base_report.objective, abs=1e-9)


@pytest.mark.slow
@pytest.mark.parametrize("kind", list(Kind))
def test_sparsity_bound_on_random_instances(kind):
    certified = 0
    for seed in range(200):
        spec = random_instance(kind, seed).spec
        solution, certificate, report = solve(spec)
        assert report.gap >= -1e-12
        if report.certified:
            certified += 1
            assert solution.p <= dim_quotient(spec)
            cert = certificate.certificate
            assert cert.sup_value <= 1 + 1e-6
            assert all(abs(c - 1) <= 1e-6 for c in cert.active_correlations)
            assert all(abs(r) <= 1e-8 for r in cert.null_residuals)
            w = dual_vector(spec, solution)
            assert np.linalg.norm(w - np.array(cert.w)) <= 1e-12 * (1 + np.linalg.norm(w))
    assert certified >= 190


@pytest.mark.slow
@pytest.mark.parametrize("kind", list(Kind))
def test_null_shift_covariance_per_kind(kind, rng):
    instance = random_instance(kind, 5)
    spec = instance.spec
    base, _, base_report = solve(spec)
    order = np.argsort(base.params)
    B = null_basis_images(spec)
    for _ in range(20):
        delta = rng.uniform(-1, 1, spec.null_dim)
        shifted, _, report = solve(spec.with_data(spec.y + B @ delta))
        tolerance = 1e-9 * (1 + base_report.objective)
        assert report.objective == pytest.approx(base_report.objective, abs=tolerance)
        assert shifted.p == base.p
        np.testing.assert_allclose(np.sort(shifted.params), base.params[order], atol=1e-6)
        shifted_order = np.argsort(shifted.params)
        np.testing.assert_allclose(shifted.weights[shifted_order], base.weights[order], atol=1e-7)
        if spec.null_dim:
            np.testing.assert_allclose(shifted.beta - base.beta, delta, atol=1e-7)


@pytest.mark.parametrize("kind", list(Kind))
def test_subproblem_null_shift_per_kind(kind, rng):
    """Fixed atoms: shifting y by Bδ moves β by δ and leaves the weights alone."""
    kernels = [Kernel.sine_bump()] + [Kernel.fourier_sin(k) for k in range(1, 5)]
    data = rng.uniform(-1, 1, 5)
    spec = ProblemSpec.build(kind, UNIT, kernels, data, 100.0, 2 if kind == Kind.SPLINE else None)
    family = family_for(spec)
    atoms = [family.make_atom(0.3, 1), family.make_atom(0.65, -1)]
    base = fully_corrective_subproblem(spec, atoms)
    B = null_basis_images(spec)
    for _ in range(20):
        delta = rng.uniform(-1, 1, spec.null_dim)
        shifted = fully_corrective_subproblem(spec.with_data(spec.y + B @ delta), atoms)
        assert [a for a, _ in shifted.atoms] == [a for a, _ in base.atoms]
        np.testing.assert_allclose(shifted.weights, base.weights, atol=1e-9)
        if spec.null_dim:
            np.testing.assert_allclose(shifted.beta - base.beta, delta, atol=1e-9)


def test_lmo_refines_narrow_peak_beyond_grid_argmax():
    # The grid misses the tip of the narrow Gaussian, so the broad bump leads on the grid
    spec = ProblemSpec.build(
        Kind.MEASURES, UNIT, [Kernel.sine_bump(), Kernel.gaussian(0.05037, 5e-4)], [0.0, 0.0], 1.0
    )
    family = family_for(spec)
    grid = family.parameter_grid(1024)
    assert abs(grid[np.argmax(family.correlation([1.0, 1.0], grid))] - 0.5) <= 1e-3
    atom, value = lmo(spec, [1.0, 1.0])
    assert atom.param == pytest.approx(0.05037, abs=1e-5)
    assert atom.sign == 1
    assert value >= 1.15


def test_subproblem_reaches_exact_optimality():
    spec = spikes(7).spec
    family = family_for(spec)
    params = np.linspace(0.28, 0.72, 12)
    atoms = [family.make_atom(x, 1 if i % 2 else -1) for i, x in enumerate(params)]
    # Raises MaxItersExceeded if the weights do not meet the projected-gradient tolerance
    solution = fully_corrective_subproblem(spec, atoms)
    w = dual_vector(spec, solution)
    kept = SparseSolution.build([(atom, 1.0) for atom in atoms])
    correlations = w @ family.signed_images(kept)
    assert np.all(correlations <= 1.0 + 1e-8)
    active = w @ family.signed_images(solution)
    np.testing.assert_allclose(active, 1.0, atol=1e-8)


def test_kernel_direction_keeps_fit_and_never_adds_mass():
    saturated = np.array([[1.0, 1.0]])
    direction = _kernel_direction(saturated)
    assert abs(np.sum(direction)) <= 1e-12
    np.testing.assert_allclose(saturated @ direction, 0.0, atol=1e-12)
    # The ones row is independent of [1, 2], so only the fit can be kept
    tilted = np.array([[1.0, 2.0]])
    direction = _kernel_direction(tilted)
    assert np.sum(direction) < 0
    assert np.any(direction < 0)
    np.testing.assert_allclose(tilted @ direction, 0.0, atol=1e-12)
    with pytest.raises(NumericalRankAmbiguity):
        _kernel_direction(np.eye(2))


def test_unsaturated_prune_of_random_atoms(gaussian_tv1d_spec, rng):
    family = family_for(gaussian_tv1d_spec)
    params = np.sort(rng.uniform(0.05, 0.95, 9))
    signs = rng.choice([-1, 1], 9)
    weights = rng.uniform(0.5, 2, 9)
    solution = SparseSolution.build(
        [(family.make_atom(x, int(s)), g) for x, s, g in zip(params, signs, weights)], [0.3]
    )
    spec = gaussian_tv1d_spec.with_data(forward(gaussian_tv1d_spec, solution))
    pruned = caratheodory_prune(spec, solution, np.zeros(6), require_saturation=False)
    assert pruned.p <= dim_quotient(spec) + 1
    assert np.all(pruned.weights > 0)
    assert pruned.total_mass <= solution.total_mass + 1e-10
    np.testing.assert_allclose(forward(spec, pruned), forward(spec, solution), atol=1e-9)


def test_spline_of_order_one_matches_tv1d(gaussian_tv1d_spec, rng):
    tv = gaussian_tv1d_spec.with_data(rng.uniform(-1, 1, 6))
    spline = ProblemSpec.build(Kind.SPLINE, UNIT, tv.kernels, tv.data, tv.lam, 1)
    tv_solution, _, tv_report = solve(tv)
    spline_solution, _, spline_report = solve(spline)
    assert tv_report.certified and spline_report.certified
    assert spline_report.objective == pytest.approx(tv_report.objective, abs=1e-8 * (1 + tv_report.objective))
    np.testing.assert_allclose(np.sort(spline_solution.params), np.sort(tv_solution.params), atol=1e-6)
