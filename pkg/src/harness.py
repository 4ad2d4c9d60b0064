# src/harness.py
# Experiment orchestration: builds problems and networks from an ExperimentConfig, drives a
# solver with per-iteration stopping on the stationarity metric, records traces, sweeps step
# sizes and runs the theory check suite.

import functools
import logging
import math
import multiprocessing
import os
import time
from dataclasses import dataclass, replace

import numpy as np
import psutil
from tqdm import tqdm

from src import theory
from src.config import SWEEP_SIZES, SWEEP_THETAS, SWEEP_TOPOLOGIES, region_b_radius
from src.errors import DivergenceError, NumericalError, ParameterError, SingularityError
from src.matops import gram_residual, polar_orthonormalize, procrustes_distance
from src.network import build_topology, metropolis_weights, read_graph_file, with_correction
from src.problems import generate_lrmc, generate_synthetic_pca, load_mnist_pca
from src.solvers import (SolverConfig, average_iterate, consensus_error, default_initialization,
                         initialize, step)
from src.surrogate import SurrogateParams, riemannian_gradient, surrogate_H


@dataclass(frozen=True)
class TraceRecord:
    """One row of a run trace; metrics are taken at the averaged iterate or its polar factor."""
    iter: int
    comm_rounds: int
    gradient_evals: int
    stationarity: float
    consensus: float
    feasibility: float
    dist_solution: float
    fval: float
    surrogate_norm: float
    wall_ms: float


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """
    Outcome of one run.

    Attributes:
        trace (list): TraceRecord rows with strictly increasing iter.
        reason (str): tolerance, budget or divergence.
        alpha (float): Step size used.
        beta (float): Penalty used (None for the baselines).
        method (str): Solver name.
        degree_sum (int): Directed neighbor links of the network.
        block_size (int): d * r scalars per communicated block.
    """
    trace: list
    reason: str
    alpha: float
    beta: float
    method: str
    degree_sum: int = 0
    block_size: int = 0

    @property
    def final(self):
        return self.trace[-1]

    @property
    def iterations(self):
        return self.final.iter

    @property
    def reached(self):
        return self.reason == "tolerance"

    @property
    def scalars_communicated(self):
        """comm_rounds * sum_i deg_i * d * r."""
        return self.final.comm_rounds * self.degree_sum * self.block_size


@dataclass(frozen=True)
class GridPoint:
    beta_hat: float
    alpha: float
    reason: str
    iterations: int
    final_stationarity: float

    @property
    def reached(self):
        return self.reason == "tolerance"


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    """Per-point summaries in grid order plus the winner (None when every point diverged)."""
    points: list
    best: GridPoint = None
    best_config: object = None

    @property
    def has_winner(self):
        return self.best is not None


def run_step(step_name, step_function, *args, **kwargs):
    """Runs one phase of an experiment, logging its duration and memory footprint."""
    logging.info(f"--- Starting Step: {step_name} ---")
    start_time = time.time()
    process = psutil.Process(os.getpid())
    mem_before = process.memory_info().rss / 1024 / 1024
    try:
        result = step_function(*args, **kwargs)
    except Exception as e:
        logging.error(f"--- Step Failed: {step_name} with error: {e} ---")
        raise
    duration = time.time() - start_time
    mem_after = process.memory_info().rss / 1024 / 1024
    logging.info(f"--- Step Completed: {step_name} in {duration:.2f} seconds ---")
    logging.info(f"--- Memory Usage: {mem_after:.2f} MB (Δ: {mem_after - mem_before:+.2f} MB) ---")
    return result


def synthetic_scale(settings):
    """Spectrum multiplier of a synthetic PCA instance; sqrt(n * m) unless configured."""
    if settings.scale is not None:
        return settings.scale
    return math.sqrt(settings.n * settings.m)


def build_problem(settings):
    """Instantiates the problem described by a ProblemSettings."""
    if settings.kind == "pca_synthetic":
        return generate_synthetic_pca(n=settings.n, m_per_agent=settings.m, d=settings.d, r=settings.r,
                                      xi=settings.xi, seed=settings.seed, scale=synthetic_scale(settings))
    if settings.kind == "pca_mnist":
        return load_mnist_pca(settings.path, n=settings.n, r=settings.r, seed=settings.seed)
    if settings.kind == "lrmc":
        return generate_lrmc(n=settings.n, d=settings.d, r=settings.r, T=settings.T, noise=settings.noise,
                             seed=settings.seed, ridge=settings.ridge)
    raise ParameterError(f"Unknown problem kind '{settings.kind}'")


def build_mixing(settings, n):
    """Builds the topology, its Metropolis weights and the correction matrix."""
    if settings.kind == "file":
        topology = read_graph_file(settings.path)
        if topology.n != n:
            raise ParameterError(f"Graph file {settings.path} has {topology.n} agents, the problem has {n}")
    else:
        topology = build_topology(settings.kind, n, p=settings.p, seed=settings.seed)
    mp = with_correction(metropolis_weights(topology), settings.theta)
    logging.info(f"Network: {settings.kind} on {n} agents, sigma_2(W) = {mp.sigma2:.6f}, theta = {mp.theta}")
    return mp


def resolve_step_size(cfg, problem):
    """alpha from the config, or beta_hat scaled by the problem's alpha_scale."""
    if cfg.solver.alpha is not None:
        return cfg.solver.alpha
    return problem.effective_step(cfg.solver.beta_hat)


def resolve_penalty(cfg, problem):
    """The configured beta, or the sampled beta_floor when none is given."""
    if cfg.solver.beta_penalty is not None:
        return cfg.solver.beta_penalty
    sampler = theory.RegionSampler.region_r(problem.d, problem.r, cfg.theory.seed)
    constants = theory.estimate_constants(problem, sampler, cfg.theory.pairs, samples=cfg.theory.samples)
    logging.info(f"Penalty defaults to the sampled beta_floor = {constants.beta_floor:.6g}")
    return constants.beta_floor


def _stationarity(problem, xbar):
    projected = polar_orthonormalize(xbar)
    value = float(np.linalg.norm(riemannian_gradient(problem.global_gradient, projected)))
    return projected, value


def _record(problem, state, projected, stationarity, params, started):
    xbar = average_iterate(state)
    # projected is None when x_bar has no polar factor
    reference = problem.reference if projected is not None else None
    surrogate = None
    if params is not None:
        surrogate = float(np.linalg.norm(surrogate_H(problem.global_gradient, xbar, params)))
    return TraceRecord(
        iter=state.iter,
        comm_rounds=state.comm_rounds,
        gradient_evals=state.gradient_evals,
        stationarity=stationarity,
        consensus=consensus_error(state),
        feasibility=float(np.linalg.norm(gram_residual(xbar))),
        dist_solution=procrustes_distance(projected, reference) if reference is not None else None,
        fval=float(problem.global_value(projected)) if projected is not None else math.nan,
        surrogate_norm=surrogate,
        wall_ms=(time.perf_counter() - started) * 1000.0,
    )


def _iterate(method, problem, mp, solver_cfg, X0, trace_every):
    params = SurrogateParams(solver_cfg.beta) if method == "rf_extra" else None
    started = time.perf_counter()
    state = initialize(method, problem, mp, solver_cfg, X0)
    try:
        projected, stationarity = _stationarity(problem, average_iterate(state))
    except (SingularityError, NumericalError) as e:
        logging.warning(f"{method} cannot start: {e}")
        return [_record(problem, state, None, math.nan, params, started)], "divergence"
    trace = [_record(problem, state, projected, stationarity, params, started)]
    reason = "tolerance" if stationarity < solver_cfg.tol else None
    last = (state, projected, stationarity)

    while reason is None and state.iter < solver_cfg.max_iters:
        try:
            state = step(method, state, problem, mp, solver_cfg)
            projected, stationarity = _stationarity(problem, average_iterate(state))
        except (DivergenceError, SingularityError, NumericalError) as e:
            logging.warning(f"{method} diverged: {e}")
            reason = "divergence"
            break
        last = (state, projected, stationarity)
        if stationarity < solver_cfg.tol:
            reason = "tolerance"
        if reason is not None or state.iter % trace_every == 0:
            trace.append(_record(problem, state, projected, stationarity, params, started))

    if reason is None:
        reason = "budget"
    state, projected, stationarity = last
    if trace[-1].iter != state.iter:
        trace.append(_record(problem, state, projected, stationarity, params, started))
    return trace, reason


def run_experiment(cfg, problem=None, mixing=None, X0=None):
    """
    Runs one experiment.

    Stops when the stationarity at polar(x_bar) drops strictly below tol, when max_iters rounds
    are done, or on divergence; the trace keeps every trace_every-th iterate plus the last one.

    Args:
        cfg (ExperimentConfig): Resolved configuration.
        problem (Problem): Prebuilt problem; built from cfg.problem when omitted.
        mixing (MixingPair): Prebuilt network; built from cfg.graph when omitted.
        X0 (ndarray): Initial blocks; the seeded default initialization when omitted.

    Returns:
        ExperimentResult: Trace and termination reason.
    """
    if problem is None:
        problem = run_step("Build problem", build_problem, cfg.problem)
    if mixing is None:
        mixing = run_step("Build network", build_mixing, cfg.graph, problem.n)
    method = cfg.solver.name
    alpha = resolve_step_size(cfg, problem)
    beta = run_step("Resolve penalty", resolve_penalty, cfg, problem) if method == "rf_extra" else None
    solver_cfg = SolverConfig(alpha=alpha, beta=beta, theta=mixing.theta,
                              max_iters=cfg.solver.max_iters, tol=cfg.solver.tol)
    if X0 is None:
        X0 = default_initialization(problem.n, problem.d, problem.r, cfg.solver.init_seed)

    logging.info(f"Running {method}: alpha={alpha:.6g}, beta={beta}, max_iters={solver_cfg.max_iters}, tol={solver_cfg.tol:g}")
    trace, reason = run_step(f"Iterate {method}", _iterate, method, problem, mixing, solver_cfg, X0,
                             cfg.output.trace_every)
    result = ExperimentResult(trace=trace, reason=reason, alpha=alpha, beta=beta, method=method,
                              degree_sum=mixing.degree_sum, block_size=problem.d * problem.r)
    logging.info(f"{method} stopped by {reason} after {result.iterations} iterations, stationarity {result.final.stationarity:.3e}")
    return result


def _grid_point(cfg, problem=None, mixing=None):
    result = run_experiment(cfg, problem=problem, mixing=mixing)
    return GridPoint(beta_hat=cfg.solver.beta_hat, alpha=result.alpha, reason=result.reason,
                     iterations=result.iterations, final_stationarity=result.final.stationarity)


def rank_key(point):
    """Reaching points by iterations, final stationarity, beta_hat; then non-reaching; diverged last."""
    if point.reason == "tolerance":
        return (0, point.iterations, point.final_stationarity, point.beta_hat)
    if point.reason == "budget":
        return (1, 0, point.final_stationarity, point.beta_hat)
    return (2, 0, math.inf, point.beta_hat)


def grid_search(cfg_template, beta_hat_grid, workers=1, problem=None, mixing=None):
    """
    Runs every beta_hat of the grid independently and picks the best point.

    Args:
        cfg_template (ExperimentConfig): Configuration shared by all points.
        beta_hat_grid (list): Raw step-size values.
        workers (int): Worker processes; 1 runs sequentially.
        problem (Problem): Prebuilt problem shared by all points.
        mixing (MixingPair): Prebuilt network shared by all points.

    Returns:
        GridSearchResult: Summaries in grid order and the winner, if any point did not diverge.
    """
    if not beta_hat_grid:
        raise ParameterError("The step-size grid is empty")
    if problem is None:
        problem = run_step("Build problem", build_problem, cfg_template.problem)
    if mixing is None:
        mixing = run_step("Build network", build_mixing, cfg_template.graph, problem.n)
    if cfg_template.solver.name == "rf_extra" and cfg_template.solver.beta_penalty is None:
        cfg_template = cfg_template.with_solver(beta_penalty=resolve_penalty(cfg_template, problem))

    configs = [cfg_template.with_solver(beta_hat=float(b), alpha=None) for b in beta_hat_grid]
    evaluate = functools.partial(_grid_point, problem=problem, mixing=mixing)
    logging.info(f"Grid search over {len(configs)} step sizes with {workers} worker(s)")
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            points = list(tqdm(pool.imap(evaluate, configs), total=len(configs), desc="grid"))
    else:
        points = [evaluate(c) for c in tqdm(configs, desc="grid")]

    for point in points:
        logging.info(f"beta_hat={point.beta_hat:g}: {point.reason} after {point.iterations} iterations, stationarity {point.final_stationarity:.3e}")
    candidates = [(p, c) for p, c in zip(points, configs) if p.reason != "divergence"]
    if not candidates:
        logging.warning("Every grid point diverged: no winner")
        return GridSearchResult(points=points)
    best, best_config = min(candidates, key=lambda pc: rank_key(pc[0]))
    logging.info(f"Best beta_hat = {best.beta_hat:g} ({best.reason}, {best.iterations} iterations)")
    return GridSearchResult(points=points, best=best, best_config=best_config)


def run_robustness_sweep(cfg, betas, problem=None, mixing=None):
    """Runs RF-EXTRA at a fixed step for each penalty value; returns {beta: ExperimentResult}."""
    if problem is None:
        problem = build_problem(cfg.problem)
    if mixing is None:
        mixing = build_mixing(cfg.graph, problem.n)
    results = {}
    for beta in betas:
        point_cfg = cfg.with_solver(name="rf_extra", beta_penalty=float(beta))
        results[beta] = run_experiment(point_cfg, problem=problem, mixing=mixing)
    return results


def _sweep_spectrum(seed):
    worst = 0.0
    count = 0
    for kind, p in SWEEP_TOPOLOGIES:
        for n in SWEEP_SIZES:
            topology = build_topology(kind, n, p=p, seed=seed)
            W = metropolis_weights(topology)
            for theta in SWEEP_THETAS:
                report = theory.check_transition_spectrum(with_correction(W, theta), seed=seed)
                worst = max(worst, report.rho_P)
                count += 1
    return worst, count


def run_theory_suite(cfg, checks=None):
    """
    Runs the theory checks for a configuration and returns report lines.

    Args:
        cfg (ExperimentConfig): Problem, network and theory settings.
        checks (list): Names to run; all checks when None.

    Returns:
        list: (name, passed, line) tuples.
    """
    selected = set(checks) if checks else None
    def wanted(name):
        return selected is None or name in selected

    lines = []

    def emit(name, passed, **metrics):
        line = theory.format_check(name, passed, **metrics)
        logging.info(line)
        lines.append((name, passed, line))

    problem = run_step("Build problem", build_problem, cfg.problem)
    mp = run_step("Build network", build_mixing, cfg.graph, problem.n)
    settings = cfg.theory

    if wanted("transition_spectrum"):
        report = theory.check_transition_spectrum(mp, seed=settings.seed)
        emit("transition_spectrum", report.passed, rho_P=report.rho_P, sigma2=mp.sigma2,
             witness_ratio=report.witness_ratio, decay_constant=report.decay_constant)
    if wanted("topology_sweep"):
        worst, count = run_step("Topology sweep", _sweep_spectrum, settings.seed)
        emit("topology_sweep", worst < 1.0, combinations=count, worst_rho_P=worst)

    sampler = theory.RegionSampler.region_r(problem.d, problem.r, settings.seed)
    constants = None
    if wanted("constants") or wanted("coercivity"):
        constants = run_step("Estimate constants", theory.estimate_constants, problem, sampler, settings.pairs,
                             samples=settings.samples, beta=cfg.solver.beta_penalty, mp=mp)
    if wanted("constants"):
        bound = 3.0 * region_b_radius(problem.r) ** 2 + 1.0
        emit("constants", constants.is_valid() and constants.L_b_hat <= bound,
             L_f=constants.L_f_hat, L_g=constants.L_g_hat, L_b=constants.L_b_hat, C0=constants.C0_hat,
             M_g=constants.M_g_hat, M_H=constants.M_H_hat, L_H=constants.L_H_hat, L_h=constants.L_h_hat,
             beta_floor=constants.beta_floor)
    if wanted("coercivity"):
        samples = theory.sample_region_R(sampler, settings.samples)
        report = theory.check_coercivity(problem, SurrogateParams(constants.beta_floor), samples)
        emit("coercivity", report.violations == 0, violations=report.violations,
             worst_margin=report.worst_margin, samples=report.samples, beta=constants.beta_floor)
    if wanted("approximation_gap"):
        samples = theory.sample_region_R(sampler, min(settings.samples, 100))
        gap = theory.approximation_gap(problem, samples)
        emit("approximation_gap", math.isfinite(gap), max_relative_gap=gap)

    rate_names = ("averaged_identities", "rate", "feasibility_rate", "consensus_summability")
    if not any(wanted(name) for name in rate_names):
        return lines

    alpha = settings.rate_alpha if settings.rate_alpha is not None else resolve_step_size(cfg, problem)
    beta = settings.rate_beta if settings.rate_beta is not None else (
        constants.beta_floor if constants is not None and cfg.solver.beta_penalty is None
        else resolve_penalty(cfg, problem))
    X0 = default_initialization(problem.n, problem.d, problem.r, cfg.solver.init_seed)

    if wanted("averaged_identities"):
        solver_cfg = SolverConfig(alpha=alpha, beta=beta, theta=mp.theta, max_iters=settings.identity_iters)
        report = run_step("Averaged identities", theory.check_averaged_identities, problem, mp, solver_cfg, X0,
                          settings.identity_iters)
        emit("averaged_identities", report.passed, max_dual_error=report.max_dual_error,
             max_primal_error=report.max_primal_error, iterations=report.iterations)

    if any(wanted(name) for name in rate_names[1:]):
        rate_cfg = replace(cfg.with_solver(name="rf_extra", alpha=alpha, beta_penalty=beta, tol=0.0,
                                           max_iters=settings.rate_iters),
                           output=replace(cfg.output, trace_every=1))
        result = run_experiment(rate_cfg, problem=problem, mixing=mp, X0=X0)
        complete = result.reason == "budget"
        if wanted("rate"):
            report = theory.check_rate([rec.surrogate_norm for rec in result.trace], settings.rate_kmin,
                                       settings.rate_iters) if complete else theory.RateReport(math.nan, False)
            emit("rate", report.passed, slope=report.slope, k_min=settings.rate_kmin, k_max=settings.rate_iters)
        if wanted("feasibility_rate"):
            report = theory.check_feasibility_rate([rec.feasibility for rec in result.trace], settings.rate_kmin,
                                                   settings.rate_iters) if complete else theory.RateReport(math.nan, False)
            emit("feasibility_rate", report.passed, slope=report.slope, k_min=settings.rate_kmin,
                 k_max=settings.rate_iters)
        if wanted("consensus_summability"):
            report = theory.check_consensus_summability([rec.consensus for rec in result.trace])
            emit("consensus_summability", complete and report.passed, max_consensus=report.max_consensus,
                 tail_fraction=report.tail_fraction)
    return lines


THEORY_CHECKS = ("transition_spectrum", "topology_sweep", "constants", "coercivity", "approximation_gap",
                 "averaged_identities", "rate", "feasibility_rate", "consensus_summability")
