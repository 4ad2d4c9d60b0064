# src/theory.py
# Numerical checks of the structure RF-EXTRA's convergence analysis relies on: coercivity of the
# surrogate map, the spectrum of the joint-error transition matrix, the averaged-recursion
# identities, sampled smoothness constants and the empirical O(1/K) rate.
#
# Sampled constants are lower bounds on the true suprema; a beta_floor assembled from them is a
# heuristic default, not a certificate.

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize

from src.config import (COERCIVITY_REL_TOL, IDENTITY_REL_TOL, MIN_CONSTANT_PAIRS, POWER_DECAY_HORIZON,
                        POWER_DECAY_MARGIN, RATE_SLOPE_THRESHOLD, REGION_R_RADIUS, REGION_SAMPLES,
                        WITNESS_TOL, region_b_radius)
from src.errors import DivergenceError, NumericalError, ParameterError
from src.matops import gram_residual, qr_orthonormalize, spectral_radius, sym
from src.network import build_joint_transition
from src.solvers import rf_extra_init, rf_extra_step
from src.surrogate import approx_grad_G, penalty_gradient, surrogate_H


@dataclass(frozen=True)
class TheoryConstants:
    """
    Sampled smoothness constants.

    Lipschitz hats are maxima of difference quotients over pairs in the bounded set B; the
    suprema hats are maxima over samples of the region R. `beta` is the penalty used for the
    beta-dependent constants L_H_hat, L_h_hat and M_H_hat.
    """
    L_f_hat: float
    L_g_hat: float
    L_b_hat: float
    L_H_hat: float
    L_h_hat: float
    M_g_hat: float
    M_H_hat: float
    C0_hat: float
    beta_floor: float
    beta: float
    rho_P: float = 0.0
    sigma2: float = 0.0

    def is_valid(self):
        values = [self.L_f_hat, self.L_g_hat, self.L_b_hat, self.L_H_hat, self.L_h_hat, self.M_g_hat,
                  self.M_H_hat, self.C0_hat, self.beta_floor, self.rho_P, self.sigma2]
        return all(math.isfinite(v) and v >= 0.0 for v in values)


@dataclass(frozen=True)
class RegionSampler:
    """
    Seeded sampler of matrices in R (feasibility violation at most `radius`) or in B (Frobenius
    norm at most `radius`). Sample i depends only on (seed, i), so a longer sample list always
    extends a shorter one.

    `spread` scales the target violation of R samples; spread = 0 yields exactly orthonormal samples.
    """
    d: int
    r: int
    radius: float
    seed: int = 0
    spread: float = 1.0

    def __post_init__(self):
        if not (1 <= self.r <= self.d):
            raise ParameterError(f"Need 1 <= r <= d, got d={self.d}, r={self.r}")
        if not self.radius > 0.0:
            raise ParameterError(f"radius must be positive, got {self.radius}")
        if not (0.0 <= self.spread <= 1.0):
            raise ParameterError(f"spread must lie in [0, 1], got {self.spread}")

    @classmethod
    def region_r(cls, d, r, seed=0, spread=1.0):
        return cls(d, r, REGION_R_RADIUS, seed, spread)

    @classmethod
    def region_b(cls, d, r, seed=0):
        return cls(d, r, region_b_radius(r), seed)

    def rng(self, index, stream=0):
        return np.random.default_rng([self.seed, stream, index])


@dataclass(frozen=True)
class CoercivityReport:
    violations: int
    worst_margin: float
    samples: int


@dataclass(frozen=True)
class SpectrumReport:
    rho_P: float
    witness_ratio: float
    decay_constant: float
    decay_ok: bool
    passed: bool


@dataclass(frozen=True)
class RateReport:
    slope: float
    passed: bool
    vacuous: bool = False


@dataclass(frozen=True)
class IdentityReport:
    max_dual_error: float
    max_primal_error: float
    iterations: int
    passed: bool


@dataclass(frozen=True)
class SummabilityReport:
    max_consensus: float
    total: float
    tail_fraction: float
    passed: bool


def assemble_beta_floor(L_f, C0, M_g):
    """max{56 L_f^2, (6 + 21 C0) / 5, 12 sqrt(2) (M_g + 1)}."""
    return max(56.0 * L_f ** 2, (6.0 + 21.0 * C0) / 5.0, 12.0 * math.sqrt(2.0) * (M_g + 1.0))


def _violation(X):
    return float(np.linalg.norm(gram_residual(X)))


def _perturb_to_level(Z, N, target, radius):
    def excess(eps):
        return _violation(Z + eps * N) - target

    if excess(0.0) >= 0.0:
        return Z
    hi = 1e-3
    for _ in range(64):
        if excess(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise NumericalError(f"Could not bracket feasibility level {target:.3e}")
    eps = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15)
    X = Z + eps * N
    while _violation(X) > radius:
        eps *= 0.5
        X = Z + eps * N
    return X


def sample_region_R(sampler, count):
    """
    Samples X = Z + eps N with Z orthonormal and eps tuned to a target violation level.

    Every fourth sample targets a level in [0.9, 0.999] * radius so the set contains points next
    to the boundary; the others target a level uniform in [0, 0.999] * radius.

    Args:
        sampler (RegionSampler): Dimensions, radius and seed.
        count (int): Number of samples, at least 1.

    Returns:
        list: d x r matrices with ||X^T X - I||_F <= radius.
    """
    if count < 1:
        raise ParameterError(f"count must be at least 1, got {count}")
    samples = []
    for index in range(count):
        rng = sampler.rng(index, stream=0)
        Z = qr_orthonormalize(rng.standard_normal((sampler.d, sampler.r)))
        N = rng.standard_normal((sampler.d, sampler.r))
        level = rng.uniform(0.9, 0.999) if index % 4 == 0 else rng.uniform(0.0, 0.999)
        target = sampler.spread * level * sampler.radius
        X = Z if target == 0.0 else _perturb_to_level(Z, N, target, sampler.radius)
        if _violation(X) > sampler.radius:
            raise NumericalError(f"Sample {index} left the region: violation {_violation(X):.3e}")
        samples.append(X)
    return samples


def _ball_point(rng, d, r, radius):
    G = rng.standard_normal((d, r))
    return G * (0.999 * radius * rng.uniform(0.0, 1.0) / np.linalg.norm(G))


def sample_pairs_B(sampler, count):
    """
    Pairs of distinct points in the ball ||X||_F <= radius.

    Even pairs are independent points; odd pairs are a point and a nearby perturbation, which
    samples local difference quotients.
    """
    pairs = []
    limit = 0.999 * sampler.radius
    for index in range(count):
        rng = sampler.rng(index, stream=1)
        X = _ball_point(rng, sampler.d, sampler.r, sampler.radius)
        if index % 2 == 0:
            Y = _ball_point(rng, sampler.d, sampler.r, sampler.radius)
        else:
            D = rng.standard_normal((sampler.d, sampler.r))
            Y = X + 1e-2 * sampler.radius * D / np.linalg.norm(D)
            norm_Y = np.linalg.norm(Y)
            if norm_Y > limit:
                Y = Y * (limit / norm_Y)
        pairs.append((X, Y))
    return pairs


def exact_g_gradient(gradf, X):
    """
    Gradient of g(X) = 3/2 f(X) - 1/2 f(X X^T X), using two gradient evaluations.

    Only used by diagnostics; the solvers run on approx_grad_G.
    """
    X = np.asarray(X, dtype=float)
    XtX = X.T @ X
    D = gradf(X @ XtX)
    return 1.5 * gradf(X) - 0.5 * D @ XtX - X @ sym(X.T @ D)


def _quotient(a, b, dist):
    return float(np.linalg.norm(a - b)) / dist


def estimate_constants(problem, sampler, pair_count, samples=None, beta=None, mp=None):
    """
    Sampled estimates of the smoothness constants and the resulting beta_floor.

    Args:
        problem (Problem): Local objectives.
        sampler (RegionSampler): Sampler of the region R; B uses the same dimensions and seed.
        pair_count (int): Pairs in B, at least MIN_CONSTANT_PAIRS.
        samples (int): Samples in R; defaults to REGION_SAMPLES.
        beta (float): Penalty for L_H, L_h and M_H; defaults to the assembled beta_floor.
        mp (MixingPair): When given, rho(P) and sigma_2(W) are filled in.

    Returns:
        TheoryConstants: The estimates.
    """
    if pair_count < MIN_CONSTANT_PAIRS:
        raise ParameterError(f"pair_count must be at least {MIN_CONSTANT_PAIRS}, got {pair_count}")
    region_points = sample_region_R(sampler, samples or REGION_SAMPLES)
    pairs = sample_pairs_B(RegionSampler.region_b(sampler.d, sampler.r, sampler.seed), pair_count)
    grads = [problem.local_gradient_fn(i) for i in range(problem.n)]

    L_f = L_g = L_b = 0.0
    for X, Y in pairs:
        dist = float(np.linalg.norm(X - Y))
        if dist == 0.0:
            continue
        L_b = max(L_b, _quotient(penalty_gradient(X), penalty_gradient(Y), dist))
        PX, PY = X @ (X.T @ X), Y @ (Y.T @ Y)
        projected_dist = float(np.linalg.norm(PX - PY))
        for grad in grads:
            L_g = max(L_g, _quotient(approx_grad_G(grad, X), approx_grad_G(grad, Y), dist))
            L_f = max(L_f, _quotient(grad(X), grad(Y), dist))
            if projected_dist > 0.0:
                L_f = max(L_f, _quotient(grad(PX), grad(PY), projected_dist))

    M_g = C0 = 0.0
    region_terms = []
    for X in region_points:
        Y = X @ (X.T @ X)
        penalty = penalty_gradient(X)
        for grad in grads:
            D = grad(Y)
            G = approx_grad_G(lambda _point, D=D: D, X)
            C0 = max(C0, float(np.linalg.norm(D)))
            M_g = max(M_g, float(np.linalg.norm(G)))
            region_terms.append((G, penalty))

    beta_floor = assemble_beta_floor(L_f, C0, M_g)
    beta_used = beta_floor if beta is None else float(beta)
    M_H = max(float(np.linalg.norm(G + beta_used * penalty)) for G, penalty in region_terms)

    L_h = 0.0
    for X, Y in pairs:
        dist = float(np.linalg.norm(X - Y))
        if dist == 0.0:
            continue
        grad_h_X = exact_g_gradient(problem.global_gradient, X) + beta_used * penalty_gradient(X)
        grad_h_Y = exact_g_gradient(problem.global_gradient, Y) + beta_used * penalty_gradient(Y)
        L_h = max(L_h, _quotient(grad_h_X, grad_h_Y, dist))

    rho_P = sigma2 = 0.0
    if mp is not None:
        rho_P = spectral_radius(build_joint_transition(mp))
        sigma2 = mp.sigma2

    constants = TheoryConstants(L_f_hat=L_f, L_g_hat=L_g, L_b_hat=L_b, L_H_hat=L_g + beta_used * L_b,
                                L_h_hat=L_h, M_g_hat=M_g, M_H_hat=M_H, C0_hat=C0,
                                beta_floor=beta_floor, beta=beta_used, rho_P=rho_P, sigma2=sigma2)
    logging.info(f"Estimated constants over {pair_count} pairs: L_f={L_f:.4g}, C0={C0:.4g}, M_g={M_g:.4g}, beta_floor={beta_floor:.4g}")
    return constants


def check_coercivity(problem, params, samples):
    """
    Checks ||H(X)||^2 >= ||G(X)||^2 + beta ||X^T X - I||^2 with the averaged maps.

    Args:
        problem (Problem): Local objectives; the global gradient drives G and H.
        params (SurrogateParams): Penalty weight.
        samples (list): Points of the region R.

    Returns:
        CoercivityReport: Violations beyond COERCIVITY_REL_TOL * (1 + rhs) and the smallest margin.
    """
    violations = 0
    worst = math.inf
    for X in samples:
        G = approx_grad_G(problem.global_gradient, X)
        H = surrogate_H(problem.global_gradient, X, params)
        Q = gram_residual(X)
        lhs = float(np.sum(H * H))
        rhs = float(np.sum(G * G)) + params.beta * float(np.sum(Q * Q))
        margin = lhs - rhs
        worst = min(worst, margin)
        if margin < -COERCIVITY_REL_TOL * (1.0 + rhs):
            violations += 1
    if violations:
        logging.warning(f"Coercivity violated at {violations} of {len(samples)} samples (worst margin {worst:.3e})")
    return CoercivityReport(violations=violations, worst_margin=worst, samples=len(samples))


def check_power_decay(P, rho, horizon=POWER_DECAY_HORIZON, margin=POWER_DECAY_MARGIN):
    """
    Tracks ||M^k||_F for M = P / (rho + margin) and k <= horizon.

    Returns:
        tuple: (C, ok) where C = max_k ||M^k||_F, so ||P^k||_F <= C (rho + margin)^k on the horizon,
        and ok says the tail norm does not exceed the largest norm of the first half.
    """
    M = P / (rho + margin)
    power = np.eye(P.shape[0])
    norms = []
    for _ in range(horizon + 1):
        norms.append(float(np.linalg.norm(power)))
        power = power @ M
    ok = all(math.isfinite(v) for v in norms) and norms[-1] <= max(norms[: horizon // 2 + 1])
    return max(norms), ok


def check_transition_spectrum(mp, seed=0):
    """
    Spectral contraction of the joint-error transition matrix.

    Also measures ||P [0; u]||_F / ||u||_F for a random u with 1^T u = 0, which equals sqrt(2):
    P is not a Frobenius-norm contraction even when rho(P) < 1.

    Args:
        mp (MixingPair): Network matrices.
        seed (int): Seed of the witness vector.

    Returns:
        SpectrumReport: rho(P), the witness ratio, the power-decay fit and the overall verdict.
    """
    P = build_joint_transition(mp)
    rho = spectral_radius(P)
    n = mp.n
    u = np.random.default_rng(seed).standard_normal(n)
    u -= u.mean()
    z = np.concatenate([np.zeros(n), u])
    ratio = float(np.linalg.norm(P @ z) / np.linalg.norm(u))
    decay_constant, decay_ok = check_power_decay(P, rho)
    passed = rho < 1.0 and abs(ratio - math.sqrt(2.0)) <= WITNESS_TOL and decay_ok
    return SpectrumReport(rho_P=rho, witness_ratio=ratio, decay_constant=decay_constant,
                          decay_ok=decay_ok, passed=passed)


def _rate_fit(values, k_min, k_max):
    if k_min < 10 or k_max < 10 * k_min:
        raise ParameterError(f"Need K_max >= 10 K_min >= 100, got K_min={k_min}, K_max={k_max}")
    values = np.asarray(values, dtype=float)
    if values.size < k_max + 1:
        raise ParameterError(f"Trace too short: {values.size} values for K_max={k_max}")
    partial = np.cumsum(values[: k_max + 1] ** 2) / np.arange(1, k_max + 2)
    grid = np.unique(np.round(np.geomspace(k_min, k_max, 25)).astype(int))
    means = partial[grid]
    if not np.all(np.isfinite(means)):
        return RateReport(slope=math.nan, passed=False)
    positive = means > 0.0
    if positive.sum() < 2:
        return RateReport(slope=-math.inf, passed=True, vacuous=True)
    slope = float(np.polyfit(np.log(grid[positive]), np.log(means[positive]), 1)[0])
    return RateReport(slope=slope, passed=slope <= RATE_SLOPE_THRESHOLD)


def check_rate(values, k_min, k_max):
    """
    Fits the decay of S(K) = (1/(K+1)) sum_{k<=K} h_k^2 on a log-spaced grid in [K_min, K_max].

    Args:
        values (sequence): h_k = ||H(x_bar_k)||_F for k = 0, 1, ... from a fixed-budget run.
        k_min (int): Left end of the fitting window.
        k_max (int): Right end; needs K_max >= 10 K_min >= 100.

    Returns:
        RateReport: Least-squares slope of log S against log K; passes when slope <= -0.8.
    """
    return _rate_fit(values, k_min, k_max)


def check_feasibility_rate(values, k_min, k_max):
    """Same fit as check_rate applied to ||x_bar_k^T x_bar_k - I||_F."""
    return _rate_fit(values, k_min, k_max)


def check_consensus_summability(values, tail=0.1, tol=1e-3):
    """
    Bounded consensus error with summable squares: the last `tail` share of the trace must
    contribute at most `tol` of the total sum of squares.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0 or not np.all(np.isfinite(values)):
        return SummabilityReport(max_consensus=math.nan, total=math.nan, tail_fraction=math.nan, passed=False)
    squares = values ** 2
    total = float(squares.sum())
    start = int(values.size * (1.0 - tail))
    fraction = float(squares[start:].sum()) / total if total > 0.0 else 0.0
    return SummabilityReport(max_consensus=float(values.max()), total=total, tail_fraction=fraction,
                             passed=fraction <= tol)


def check_averaged_identities(problem, mp, cfg, X0, iterations):
    """
    Runs RF-EXTRA and measures s_bar_k + alpha H_bar_k and x_bar_{k+1} - x_bar_k + alpha H_bar_k.

    Errors are relative: the dual one to 1 + ||alpha H_bar_k||_F, the primal one to 1 + ||x_bar_k||_F.

    Returns:
        IdentityReport: Worst errors over the run; passes when both stay below IDENTITY_REL_TOL.
    """
    state = rf_extra_init(problem, mp, cfg, X0)
    dual = primal = 0.0
    for _ in range(iterations + 1):
        step_term = cfg.alpha * state.H_cache.mean(axis=0)
        xbar = state.X.mean(axis=0)
        dual = max(dual, float(np.linalg.norm(state.s.mean(axis=0) + step_term)) / (1.0 + float(np.linalg.norm(step_term))))
        if state.iter == iterations:
            break
        try:
            following = rf_extra_step(state, problem, mp, cfg)
        except DivergenceError as e:
            logging.warning(f"Averaged-identity run diverged: {e}")
            return IdentityReport(max_dual_error=dual, max_primal_error=primal, iterations=state.iter, passed=False)
        moved = following.X.mean(axis=0) - xbar + step_term
        primal = max(primal, float(np.linalg.norm(moved)) / (1.0 + float(np.linalg.norm(xbar))))
        state = following
    passed = dual <= IDENTITY_REL_TOL and primal <= IDENTITY_REL_TOL
    return IdentityReport(max_dual_error=dual, max_primal_error=primal, iterations=state.iter, passed=passed)


def approximation_gap(problem, samples):
    """
    Largest relative gap ||G(X) - grad g(X)||_F / (1 + ||grad g(X)||_F) over samples.

    The gap vanishes on the manifold and grows with the feasibility violation.
    """
    worst = 0.0
    for X in samples:
        exact = exact_g_gradient(problem.global_gradient, X)
        gap = np.linalg.norm(approx_grad_G(problem.global_gradient, X) - exact)
        worst = max(worst, float(gap) / (1.0 + float(np.linalg.norm(exact))))
    return worst


def format_check(name, passed, **metrics):
    """One report line: `CHECK <name> PASS|FAIL key=value ...`."""
    parts = [f"CHECK {name} {'PASS' if passed else 'FAIL'}"]
    for key, value in metrics.items():
        parts.append(f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}")
    return " ".join(parts)
