import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import DimensionError, SingularityError
from src.matops import (gram_residual, polar_orthonormalize, procrustes_distance, qr_orthonormalize,
                        second_largest_singular_value, spectral_radius, sym)


def test_sym_returns_symmetric_part(rng):
    A = rng.standard_normal((4, 4))
    S = sym(A)
    assert_allclose(S, S.T)
    assert_allclose(S + 0.5 * (A - A.T), A)


def test_sym_rejects_non_square():
    with pytest.raises(DimensionError):
        sym(np.zeros((3, 2)))


def test_gram_residual_vanishes_on_orthonormal_columns(rng):
    X = qr_orthonormalize(rng.standard_normal((7, 3)))
    assert np.linalg.norm(gram_residual(X)) < 1e-14


def test_gram_residual_needs_tall_matrix():
    with pytest.raises(DimensionError):
        gram_residual(np.zeros((2, 3)))


def test_polar_factor_is_orthonormal_and_closest(rng):
    X = rng.standard_normal((8, 3))
    P = polar_orthonormalize(X)
    assert_allclose(P.T @ P, np.eye(3), atol=1e-13)
    # Any other orthonormal matrix is at least as far from X
    for _ in range(20):
        Z = qr_orthonormalize(rng.standard_normal((8, 3)))
        assert np.linalg.norm(X - P) <= np.linalg.norm(X - Z) + 1e-12


def test_polar_of_orthonormal_matrix_is_identity_map(rng):
    Z = qr_orthonormalize(rng.standard_normal((6, 2)))
    assert_allclose(polar_orthonormalize(Z), Z, atol=1e-13)


def test_polar_rejects_rank_deficient_input(rng):
    x = rng.standard_normal((5, 1))
    with pytest.raises(SingularityError):
        polar_orthonormalize(np.hstack([x, 2.0 * x]))
    with pytest.raises(SingularityError):
        polar_orthonormalize(np.zeros((4, 2)))


def test_qr_orthonormalize_has_nonnegative_diagonal(rng):
    X = rng.standard_normal((6, 3))
    Q = qr_orthonormalize(X)
    assert_allclose(Q.T @ Q, np.eye(3), atol=1e-13)
    assert np.all(np.diag(Q.T @ X) >= 0.0)


def test_procrustes_distance_ignores_rotations(rng):
    X = qr_orthonormalize(rng.standard_normal((6, 3)))
    R = qr_orthonormalize(rng.standard_normal((3, 3)))
    assert procrustes_distance(X @ R, X) < 1e-12
    Y = qr_orthonormalize(rng.standard_normal((6, 3)))
    assert procrustes_distance(X, Y) > 1e-3


def test_procrustes_distance_shape_mismatch():
    with pytest.raises(DimensionError):
        procrustes_distance(np.eye(3)[:, :2], np.eye(4)[:, :2])


def test_second_singular_value_of_four_cycle():
    W = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]]) / 3.0
    assert second_largest_singular_value(W) == pytest.approx(1.0 / 3.0)
    assert second_largest_singular_value(np.ones((1, 1))) == 0.0


def test_spectral_radius_matches_eigenvalues(rng):
    A = rng.standard_normal((7, 7))
    assert spectral_radius(A) == pytest.approx(np.max(np.abs(np.linalg.eigvals(A))), rel=1e-10)
    # Rotation block: complex eigenvalues of modulus 0.5
    R = 0.5 * np.array([[0.0, -1.0], [1.0, 0.0]])
    assert spectral_radius(R) == pytest.approx(0.5)
