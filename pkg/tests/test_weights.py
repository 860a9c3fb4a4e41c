import numpy as np
import pytest

from exsparse.weights import WeightProblem


def assert_kkt(problem: WeightProblem, gamma: np.ndarray, tol: float) -> None:
    grad = problem.gradient(gamma)
    assert np.all(gamma >= 0)
    np.testing.assert_allclose(grad[gamma > 0], 0.0, atol=tol)
    assert np.all(grad[gamma == 0] >= -tol)


def test_single_column_closed_form():
    problem = WeightProblem(np.array([[1.0]]), np.array([2.0]), 1e6)
    gamma = problem.exact()
    assert gamma[0] == pytest.approx(2.0 - 1e-6, abs=1e-12)
    assert problem.value(gamma) == pytest.approx(2.0 - 0.5e-6, abs=1e-12)


def test_small_data_gives_zero():
    # λ|Kᵀy| <= 1 makes γ = 0 optimal
    problem = WeightProblem(np.array([[1.0, -0.5]]), np.array([0.1]), 5.0)
    np.testing.assert_array_equal(problem.exact(), [0.0, 0.0])
    gamma, converged = problem.solve(np.ones(2), 1e-12, 100)
    assert converged
    np.testing.assert_array_equal(gamma, [0.0, 0.0])


def test_empty_problem():
    problem = WeightProblem(np.zeros((3, 0)), np.ones(3), 1.0)
    gamma, converged = problem.solve(np.zeros(0), 1e-12, 10)
    assert converged and gamma.size == 0


@pytest.mark.parametrize("lam", [1.0, 1e3, 1e6])
def test_exact_meets_kkt_on_random_problems(lam, rng):
    for _ in range(20):
        K = rng.standard_normal((5, 12))
        y = rng.standard_normal(5)
        problem = WeightProblem(K, y, lam)
        gamma = problem.exact()
        assert_kkt(problem, gamma, 1e-9 * (1 + lam * np.linalg.norm(y)))
        # At most rank + 1 weights survive
        assert np.count_nonzero(gamma) <= 6


def test_mass_guess_does_not_change_the_answer(rng):
    K = rng.standard_normal((4, 9))
    y = rng.standard_normal(4)
    problem = WeightProblem(K, y, 100.0)
    reference = problem.value(problem.exact())
    for guess in (0.0, 0.5, 10.0, 1e4):
        assert problem.value(problem.exact(guess)) == pytest.approx(reference, rel=1e-12)


def test_solve_beats_a_tiny_iteration_budget(rng):
    # Correlated columns stall projected gradient; the exact finish does not need the budget
    t = np.linspace(0, 1, 30)
    K = np.exp(-((t[:, None] - np.linspace(0.2, 0.8, 25)[None, :]) ** 2) / 0.02)
    y = K[:, [5, 17]] @ np.array([1.0, 0.7])
    problem = WeightProblem(K, y, 1e6)
    tol = 1e-10 * (1 + 1e6 * np.linalg.norm(y))
    gamma, converged = problem.solve(np.zeros(25), tol, max_iters=5)
    assert converged
    assert problem.projected_gradient_norm(gamma) <= tol


def test_polish_rejects_sign_changes():
    problem = WeightProblem(np.eye(2), np.array([1.0, -1.0]), 10.0)
    assert problem.polish(np.array([1.0, 1.0])) is None
    np.testing.assert_allclose(problem.polish(np.array([1.0, 0.0])), [0.9, 0.0])
