# src/solvers.py
# Iteration engines over the simulated network: RF-EXTRA and two retraction-based baselines.
#
# Agent blocks are stacked into arrays of shape (n, d, r). Each step reads only the k-indexed
# state and returns a fresh StackedState for k + 1, so a step is one synchronous round.

import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, replace

import numpy as np

from src.config import DEFAULT_THETA, DIVERGENCE_NORM_CAP
from src.errors import DivergenceError, NumericalError, ParameterError, SingularityError
from src.matops import polar_orthonormalize, qr_orthonormalize
from src.surrogate import SurrogateParams, riemannian_gradient, surrogate_H

SOLVER_NAMES = ("rf_extra", "dprgd", "rextra_style")


@dataclass(frozen=True)
class SolverConfig:
    """
    Step size, penalty and stopping parameters of a run.

    Attributes:
        alpha (float): Step size, > 0.
        beta (float): Penalty weight, > 0; only RF-EXTRA reads it and baselines may leave it None.
        theta (float): Correction weight in (0, 1/2].
        max_iters (int): Iteration budget, >= 1.
        tol (float): Stationarity threshold, >= 0.
    """
    alpha: float
    beta: float = None
    theta: float = DEFAULT_THETA
    max_iters: int = 1000
    tol: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise ParameterError(f"alpha must be positive and finite, got {self.alpha}")
        if self.beta is not None and not (math.isfinite(self.beta) and self.beta > 0.0):
            raise ParameterError(f"beta must be positive and finite, got {self.beta}")
        if not (0.0 < self.theta <= 0.5):
            raise ParameterError(f"theta must lie in (0, 1/2], got {self.theta}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.tol < 0.0:
            raise ParameterError(f"tol must be nonnegative, got {self.tol}")

    @property
    def surrogate_params(self):
        if self.beta is None:
            raise ParameterError("RF-EXTRA needs a penalty beta")
        return SurrogateParams(self.beta)


@dataclass(frozen=True, eq=False)
class StackedState:
    """
    Joint state of all agents after `iter` rounds.

    Attributes:
        X (ndarray): Primal blocks, shape (n, d, r).
        s (ndarray): Auxiliary blocks, shape (n, d, r).
        H_cache (ndarray): Per-agent search directions evaluated at X.
        iter (int): Rounds completed.
        comm_rounds (int): Neighbor exchanges so far.
        gradient_evals (int): Local gradient evaluations made by the steps.
        method (str): Solver that produced the state.
    """
    X: np.ndarray
    s: np.ndarray
    H_cache: np.ndarray
    iter: int = 0
    comm_rounds: int = 0
    gradient_evals: int = 0
    method: str = "rf_extra"

    @property
    def n(self):
        return self.X.shape[0]


def _stack_blocks(problem, X0):
    blocks = np.array(X0, dtype=float)
    expected = (problem.n, problem.d, problem.r)
    if blocks.shape != expected:
        raise ParameterError(f"Initial blocks have shape {blocks.shape}, expected {expected}")
    return blocks


@contextmanager
def _guarded_round(iteration):
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        try:
            yield
        except (np.linalg.LinAlgError, NumericalError) as e:
            if isinstance(e, DivergenceError):
                raise
            raise DivergenceError(f"Linear algebra failed at iteration {iteration}: {e}", iteration) from e


def _mix(W, X):
    return np.tensordot(W, X, axes=([1], [0]))


def _guard(iteration, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise DivergenceError(f"Non-finite values at iteration {iteration}", iteration)
        largest = np.max(np.linalg.norm(arr, axis=(1, 2)))
        if largest > DIVERGENCE_NORM_CAP:
            raise DivergenceError(f"Block norm {largest:.3e} exceeds {DIVERGENCE_NORM_CAP:.0e} at iteration {iteration}", iteration)


def _surrogates(problem, X, params):
    return np.stack([surrogate_H(problem.local_gradient_fn(i), X[i], params) for i in range(problem.n)])


def _riemannian_gradients(problem, X):
    return np.stack([riemannian_gradient(problem.local_gradient_fn(i), X[i]) for i in range(problem.n)])


def _retract_all(X, iteration):
    try:
        return np.stack([polar_orthonormalize(block) for block in X])
    except SingularityError as e:
        raise DivergenceError(f"Retraction failed at iteration {iteration}: {e}", iteration) from e


def default_initialization(n, d, r, seed=0):
    """One seeded Gaussian d x r matrix, QR-orthonormalized and replicated to all n agents."""
    rng = np.random.default_rng(seed)
    Z = qr_orthonormalize(rng.standard_normal((d, r)))
    return np.repeat(Z[None, :, :], n, axis=0)


def rf_extra_init(problem, mp, cfg, X0):
    """
    Initial RF-EXTRA state with s_i = -alpha H_i(X_i,0).

    Args:
        problem (Problem): Local objectives.
        mp (MixingPair): Network matrices.
        cfg (SolverConfig): Run parameters.
        X0 (ndarray): Initial blocks, shape (n, d, r).

    Returns:
        StackedState: State at iteration 0.
    """
    X = _stack_blocks(problem, X0)
    H = _surrogates(problem, X, cfg.surrogate_params)
    return StackedState(X=X, s=-cfg.alpha * H, H_cache=H, method="rf_extra")


def rf_extra_step(state, problem, mp, cfg):
    """
    One RF-EXTRA round.

    X_{k+1} = W X_k + s_k and s_{k+1} = s_k + (W - V) X_k - alpha (H(X_{k+1}) - H(X_k)),
    with (W - V) X_k = theta (W X_k - X_k) so the blocks are mixed only once per round.

    Raises:
        DivergenceError: If the new blocks are non-finite or exceed DIVERGENCE_NORM_CAP.
    """
    k = state.iter + 1
    with _guarded_round(k):
        WX = _mix(mp.W, state.X)
        X_next = WX + state.s
        _guard(k, X_next)
        H_next = _surrogates(problem, X_next, cfg.surrogate_params)
        s_next = state.s + mp.theta * (WX - state.X) - cfg.alpha * (H_next - state.H_cache)
        _guard(k, H_next, s_next)
    return replace(state, X=X_next, s=s_next, H_cache=H_next, iter=k,
                   comm_rounds=state.comm_rounds + 1, gradient_evals=state.gradient_evals + problem.n)


def dprgd_init(problem, mp, cfg, X0):
    """Initial state of decentralized projected Riemannian gradient descent (no auxiliary blocks)."""
    X = _retract_all(_stack_blocks(problem, X0), 0)
    zeros = np.zeros_like(X)
    return StackedState(X=X, s=zeros, H_cache=zeros.copy(), method="dprgd")


def dprgd_step(state, problem, mp, cfg):
    """X_{i,k+1} = polar(sum_j w_ij X_j,k - alpha grad_R f_i(polar(X_i,k)))."""
    k = state.iter + 1
    with _guarded_round(k):
        WX = _mix(mp.W, state.X)
        R = _riemannian_gradients(problem, _retract_all(state.X, k))
        moved = WX - cfg.alpha * R
        _guard(k, moved)
        X_next = _retract_all(moved, k)
    return replace(state, X=X_next, H_cache=R, iter=k,
                   comm_rounds=state.comm_rounds + 1, gradient_evals=state.gradient_evals + problem.n)


def rextra_style_init(problem, mp, cfg, X0):
    """Initial state of the retraction-based EXTRA analogue, s_i = -alpha grad_R f_i(X_i,0)."""
    X = _retract_all(_stack_blocks(problem, X0), 0)
    R = _riemannian_gradients(problem, X)
    return StackedState(X=X, s=-cfg.alpha * R, H_cache=R, method="rextra_style")


def rextra_style_step(state, problem, mp, cfg):
    """
    RF-EXTRA's recursion with H_i replaced by the Riemannian gradient and the primal update
    followed by a polar retraction.
    """
    k = state.iter + 1
    with _guarded_round(k):
        WX = _mix(mp.W, state.X)
        candidate = WX + state.s
        _guard(k, candidate)
        X_next = _retract_all(candidate, k)
        R_next = _riemannian_gradients(problem, X_next)
        s_next = state.s + mp.theta * (WX - state.X) - cfg.alpha * (R_next - state.H_cache)
        _guard(k, s_next)
    return replace(state, X=X_next, s=s_next, H_cache=R_next, iter=k,
                   comm_rounds=state.comm_rounds + 1, gradient_evals=state.gradient_evals + problem.n)


def average_iterate(state):
    """x_bar = (1/n) sum_i X_i."""
    return state.X.mean(axis=0)


def consensus_error(state):
    """||X - 1 x_bar||_F over the stacked blocks."""
    return float(np.linalg.norm(state.X - average_iterate(state)[None, :, :]))


SOLVERS = {
    "rf_extra": (rf_extra_init, rf_extra_step),
    "dprgd": (dprgd_init, dprgd_step),
    "rextra_style": (rextra_style_init, rextra_style_step),
}


def _lookup(method):
    try:
        return SOLVERS[method]
    except KeyError:
        raise ParameterError(f"Unknown solver '{method}', expected one of {SOLVER_NAMES}") from None


def initialize(method, problem, mp, cfg, X0):
    """Dispatches to the init routine of `method`."""
    init, _ = _lookup(method)
    logging.debug(f"Initializing {method} on {problem.n} agents")
    return init(problem, mp, cfg, X0)


def step(method, state, problem, mp, cfg):
    """Dispatches to the step routine of `method`."""
    _, advance = _lookup(method)
    return advance(state, problem, mp, cfg)
