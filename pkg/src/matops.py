# src/matops.py
# Dense matrix utilities shared by the surrogate maps, solvers, network and theory checks.

import numpy as np
import scipy.linalg

from src.config import RANK_TOL
from src.errors import DimensionError, NumericalError, SingularityError


def _as_matrix(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got shape {A.shape}")
    return A


def _as_square(A, name):
    A = _as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def sym(A):
    """Symmetric part (A + A^T) / 2 of a square matrix."""
    A = _as_square(A, "sym argument")
    return 0.5 * (A + A.T)


def gram_residual(X):
    """
    Returns Q(X) = X^T X - I_r, zero exactly when X has orthonormal columns.

    Args:
        X (ndarray): d x r matrix with d >= r.

    Returns:
        ndarray: r x r symmetric residual.
    """
    X = _as_matrix(X, "X")
    d, r = X.shape
    if d < r:
        raise DimensionError(f"gram_residual needs d >= r, got {d} x {r}")
    return X.T @ X - np.eye(r)


def _thin_svd(X):
    try:
        return scipy.linalg.svd(X, full_matrices=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"SVD failed on a {X.shape[0]} x {X.shape[1]} matrix: {e}") from e


def polar_orthonormalize(X):
    """
    Polar factor U V^T of the thin SVD X = U S V^T.

    This is the closest matrix with orthonormal columns to X in Frobenius norm, used as the
    retraction of the baselines and to project averaged iterates before measuring them.

    Args:
        X (ndarray): d x r matrix of full column rank.

    Returns:
        ndarray: d x r matrix with orthonormal columns.

    Raises:
        SingularityError: If the smallest singular value is below RANK_TOL times the largest.
    """
    X = _as_matrix(X, "X")
    if X.shape[0] < X.shape[1]:
        raise DimensionError(f"polar_orthonormalize needs d >= r, got {X.shape}")
    U, s, Vt = _thin_svd(X)
    if s[0] == 0.0 or s[-1] < RANK_TOL * s[0]:
        raise SingularityError(f"Matrix is rank deficient (singular values {s[0]:.3e} .. {s[-1]:.3e})")
    return U @ Vt


def qr_orthonormalize(X):
    """Thin QR factor of X with the signs fixed so that diag(R) >= 0."""
    X = _as_matrix(X, "X")
    Q, R = np.linalg.qr(X, mode="reduced")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def procrustes_distance(X, Xstar):
    """
    Subspace distance min over orthogonal Q of ||X Q - Xstar||_F.

    Args:
        X (ndarray): d x r matrix.
        Xstar (ndarray): d x r reference matrix.

    Returns:
        float: The Procrustes distance.
    """
    X = _as_matrix(X, "X")
    Xstar = _as_matrix(Xstar, "Xstar")
    if X.shape != Xstar.shape:
        raise DimensionError(f"Shape mismatch: {X.shape} vs {Xstar.shape}")
    Q, _ = scipy.linalg.orthogonal_procrustes(X, Xstar)
    return float(np.linalg.norm(X @ Q - Xstar))


def second_largest_singular_value(W):
    """sigma_2(W); a 1 x 1 matrix has no second singular value and yields 0."""
    W = _as_square(W, "W")
    if W.shape[0] == 1:
        return 0.0
    s = scipy.linalg.svdvals(W)
    return float(s[1])


def spectral_radius(A):
    """
    Largest eigenvalue modulus, read off the diagonal of the complex Schur form.

    Args:
        A (ndarray): Square matrix.

    Returns:
        float: rho(A).

    Raises:
        NumericalError: If the Schur iteration does not converge.
    """
    A = _as_square(A, "A")
    try:
        T, _ = scipy.linalg.schur(A, output="complex")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"Schur decomposition did not converge: {e}") from e
    return float(np.max(np.abs(np.diag(T))))
