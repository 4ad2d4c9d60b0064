# src/surrogate.py
# Retraction-free search directions: the orthogonality penalty b, the approximate gradient
# mapping G, the surrogate map H = G + beta * grad b, and the tangent-space projection
# used for stationarity metrics.

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from src.config import FEASIBILITY_TOL
from src.errors import ParameterError, PreconditionError
from src.matops import gram_residual, sym

# grad f_i: maps a d x r matrix to a d x r matrix, deterministically
LocalGradient = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SurrogateParams:
    """Penalty weight beta of H(X) = G(X) + beta X (X^T X - I)."""
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ParameterError(f"Penalty beta must be a positive finite number, got {self.beta}")


def penalty_value(X):
    """b(X) = 1/4 ||X^T X - I||_F^2."""
    Q = gram_residual(X)
    return 0.25 * float(np.sum(Q * Q))


def penalty_gradient(X):
    """grad b(X) = X (X^T X - I)."""
    return np.asarray(X, dtype=float) @ gram_residual(X)


def approx_grad_G(gradf, X):
    """
    Approximate gradient mapping of g(X) = 3/2 f(X) - 1/2 f(X X^T X).

    G(X) = grad f(X X^T X) (3I - X^T X) / 2 - X sym(X^T grad f(X X^T X)), which needs a single
    gradient evaluation at the projected point X X^T X.

    Args:
        gradf (LocalGradient): Gradient oracle.
        X (ndarray): d x r matrix.

    Returns:
        ndarray: d x r matrix G(X).
    """
    X = np.asarray(X, dtype=float)
    XtX = X.T @ X
    D = gradf(X @ XtX)
    r = X.shape[1]
    return D @ (3.0 * np.eye(r) - XtX) / 2.0 - X @ sym(X.T @ D)


def surrogate_H(gradf, X, params):
    """
    Surrogate map H(X) = G(X) + beta X (X^T X - I).

    Computed in one pass sharing the single gradient call with G.

    Args:
        gradf (LocalGradient): Gradient oracle.
        X (ndarray): d x r matrix.
        params (SurrogateParams): Penalty weight.

    Returns:
        ndarray: d x r matrix H(X).
    """
    X = np.asarray(X, dtype=float)
    r = X.shape[1]
    XtX = X.T @ X
    Q = XtX - np.eye(r)
    D = gradf(X @ XtX)
    return D @ (np.eye(r) - 0.5 * Q) - X @ sym(X.T @ D) + params.beta * (X @ Q)


def riemannian_gradient(gradf, X):
    """
    Tangent projection grad f(X) - X sym(X^T grad f(X)) at a point of the Stiefel manifold.

    Args:
        gradf (LocalGradient): Gradient oracle.
        X (ndarray): d x r matrix with ||X^T X - I||_F <= FEASIBILITY_TOL.

    Returns:
        ndarray: d x r tangent vector.

    Raises:
        PreconditionError: If X is not feasible; callers project with polar_orthonormalize first.
    """
    X = np.asarray(X, dtype=float)
    violation = np.linalg.norm(gram_residual(X))
    if violation > FEASIBILITY_TOL:
        raise PreconditionError(f"riemannian_gradient needs a feasible point, got ||X^T X - I||_F = {violation:.3e}")
    D = gradf(X)
    return D - X @ sym(X.T @ D)
