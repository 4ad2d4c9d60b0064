import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import directional_fd
from src.errors import ParameterError, PreconditionError
from src.matops import gram_residual, qr_orthonormalize
from src.surrogate import (SurrogateParams, approx_grad_G, penalty_gradient, penalty_value,
                           riemannian_gradient, surrogate_H)
from src.theory import exact_g_gradient


def test_penalty_gradient_matches_finite_differences(rng):
    X = rng.standard_normal((6, 3))
    for _ in range(5):
        E = rng.standard_normal((6, 3))
        fd = directional_fd(penalty_value, X, E)
        assert fd == pytest.approx(np.sum(penalty_gradient(X) * E), rel=1e-6, abs=1e-9)


def test_surrogate_equals_riemannian_gradient_on_the_manifold(calibrated_problem, rng):
    X = qr_orthonormalize(rng.standard_normal((6, 2)))
    gradf = calibrated_problem.local_gradient_fn(1)
    expected = riemannian_gradient(gradf, X)
    for beta in (0.1, 1.0, 50.0):
        assert_allclose(surrogate_H(gradf, X, SurrogateParams(beta)), expected, atol=1e-12)
    assert_allclose(approx_grad_G(gradf, X), expected, atol=1e-12)


def test_surrogate_is_affine_in_beta(calibrated_problem, rng):
    X = rng.standard_normal((6, 2))
    gradf = calibrated_problem.global_gradient
    H1 = surrogate_H(gradf, X, SurrogateParams(1.0))
    H3 = surrogate_H(gradf, X, SurrogateParams(3.0))
    assert_allclose(H3 - H1, 2.0 * X @ gram_residual(X), rtol=1e-10, atol=1e-12)
    assert_allclose(H1, approx_grad_G(gradf, X) + penalty_gradient(X), rtol=1e-10, atol=1e-12)


def test_surrogate_calls_the_gradient_once(calibrated_problem, rng):
    calls = []

    def gradf(Y):
        calls.append(Y.copy())
        return calibrated_problem.global_gradient(Y)

    X = rng.standard_normal((6, 2))
    surrogate_H(gradf, X, SurrogateParams(2.0))
    assert len(calls) == 1
    # Evaluated at the projected point X X^T X
    assert_allclose(calls[0], X @ (X.T @ X))


def test_exact_gradient_of_g_matches_finite_differences(calibrated_problem, rng):
    problem = calibrated_problem

    def g(X):
        return 1.5 * problem.global_value(X) - 0.5 * problem.global_value(X @ (X.T @ X))

    X = qr_orthonormalize(rng.standard_normal((6, 2))) + 0.05 * rng.standard_normal((6, 2))
    grad = exact_g_gradient(problem.global_gradient, X)
    for _ in range(5):
        E = rng.standard_normal((6, 2))
        assert directional_fd(g, X, E) == pytest.approx(np.sum(grad * E), rel=1e-5, abs=1e-8)


def test_approximate_mapping_agrees_with_exact_gradient_on_manifold(calibrated_problem, rng):
    X = qr_orthonormalize(rng.standard_normal((6, 2)))
    gradf = calibrated_problem.global_gradient
    assert_allclose(approx_grad_G(gradf, X), exact_g_gradient(gradf, X), atol=1e-12)


def test_riemannian_gradient_is_tangent(calibrated_problem, rng):
    X = qr_orthonormalize(rng.standard_normal((6, 2)))
    R = riemannian_gradient(calibrated_problem.global_gradient, X)
    # Tangent vectors at X satisfy X^T R + R^T X = 0
    assert_allclose(X.T @ R + R.T @ X, np.zeros((2, 2)), atol=1e-12)


def test_riemannian_gradient_requires_feasible_point(calibrated_problem):
    X = 1.1 * np.eye(6)[:, :2]
    with pytest.raises(PreconditionError):
        riemannian_gradient(calibrated_problem.global_gradient, X)


@pytest.mark.parametrize("beta", [0.0, -1.0, float("inf"), float("nan")])
def test_surrogate_params_reject_invalid_beta(beta):
    with pytest.raises(ParameterError):
        SurrogateParams(beta)
