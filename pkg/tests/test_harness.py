import math

import numpy as np
import pytest

from src import harness
from src.config import LRMC_BETA_HAT_GRID, ROBUSTNESS_BETAS
from src.errors import ParameterError
from src.experiment_config import build_config
from src.report import TRACE_COLUMNS
from src.solvers import default_initialization


def test_budget_run_records_every_iteration(calibrated_config):
    cfg = calibrated_config(**{"solver.tol": 0.0, "solver.max_iters": 10, "output.trace_every": 1})
    result = harness.run_experiment(cfg)
    assert result.reason == "budget"
    assert [rec.iter for rec in result.trace] == list(range(11))
    assert [rec.gradient_evals for rec in result.trace] == [4 * k for k in range(11)]
    assert all(rec.surrogate_norm is not None for rec in result.trace)
    assert all(rec.dist_solution is not None for rec in result.trace)
    assert result.alpha == 0.05 and result.beta == 1.0


def test_sparse_trace_keeps_the_last_iterate(calibrated_config):
    cfg = calibrated_config(**{"solver.tol": 0.0, "solver.max_iters": 25, "output.trace_every": 10})
    result = harness.run_experiment(cfg)
    assert [rec.iter for rec in result.trace] == [0, 10, 20, 25]


def test_rf_extra_run_reaches_tolerance(calibrated_config):
    cfg = calibrated_config(**{"solver.tol": 1e-8, "solver.max_iters": 20000, "output.trace_every": 100})
    result = harness.run_experiment(cfg)
    assert result.reached
    final = result.final
    assert final.stationarity < 1e-8
    assert final.dist_solution < 1e-5
    # Stopping is checked every iteration, not only at recorded ones
    assert result.trace[-2].stationarity >= 1e-8
    assert result.scalars_communicated == final.comm_rounds * result.degree_sum * 12


def test_runs_are_deterministic(calibrated_config):
    cfg = calibrated_config(**{"solver.tol": 0.0, "solver.max_iters": 30})
    first = harness.run_experiment(cfg)
    second = harness.run_experiment(cfg)
    for a, b in zip(first.trace, second.trace):
        assert (a.stationarity, a.consensus, a.feasibility, a.fval) == (b.stationarity, b.consensus, b.feasibility, b.fval)


def test_baselines_have_no_surrogate_metric(calibrated_config):
    cfg = calibrated_config(**{"solver.name": "dprgd", "solver.tol": 0.0, "solver.max_iters": 5})
    result = harness.run_experiment(cfg)
    assert result.beta is None
    assert all(rec.surrogate_norm is None for rec in result.trace)
    assert all(rec.feasibility < 1e-10 for rec in result.trace[:1])


def test_divergence_ends_the_run_with_partial_trace(calibrated_config):
    cfg = calibrated_config(**{"solver.alpha": 100.0, "solver.max_iters": 200})
    result = harness.run_experiment(cfg)
    assert result.reason == "divergence"
    assert result.trace[0].iter == 0
    assert all(math.isfinite(rec.stationarity) for rec in result.trace)


def test_singular_initial_average_is_a_divergence(calibrated_config):
    Q = default_initialization(1, 6, 2)[0]
    X0 = np.stack([Q, -Q, Q, -Q])
    result = harness.run_experiment(calibrated_config(), X0=X0)
    assert result.reason == "divergence"
    assert len(result.trace) == 1
    first = result.trace[0]
    assert math.isnan(first.stationarity) and math.isnan(first.fval)
    assert first.dist_solution is None
    assert first.feasibility == pytest.approx(math.sqrt(2.0))


def test_synthetic_scale_defaults_to_row_count():
    assert harness.synthetic_scale(build_config({}).problem) == pytest.approx(math.sqrt(8000.0))
    assert harness.synthetic_scale(build_config({"problem.n": 4, "problem.m": 50}).problem) == pytest.approx(math.sqrt(200.0))
    assert harness.synthetic_scale(build_config({"problem.scale": 4}).problem) == 4.0


def test_problem_builders(calibrated_config):
    cfg = calibrated_config()
    problem = harness.build_problem(cfg.problem)
    assert (problem.n, problem.d, problem.r) == (4, 6, 2)
    mp = harness.build_mixing(cfg.graph, problem.n)
    assert mp.n == 4 and mp.theta == 0.5


def test_graph_file_must_match_agent_count(calibrated_config, tmp_path):
    path = tmp_path / "ring.txt"
    path.write_text("5\n0 1\n1 2\n2 3\n3 4\n0 4\n")
    cfg = calibrated_config(**{"graph.kind": "file", "graph.path": str(path)})
    with pytest.raises(ParameterError):
        harness.build_mixing(cfg.graph, 4)


def test_step_size_resolution(calibrated_config, calibrated_problem):
    explicit = calibrated_config()
    assert harness.resolve_step_size(explicit, calibrated_problem) == 0.05
    scaled = calibrated_config(**{"solver.alpha": None, "solver.beta_hat": 2.5})
    assert harness.resolve_step_size(scaled, calibrated_problem) == pytest.approx(0.05)


def test_penalty_defaults_to_sampled_floor(calibrated_config, calibrated_problem):
    cfg = calibrated_config(**{"solver.beta_penalty": None, "theory.samples": 20, "theory.pairs": 100})
    beta = harness.resolve_penalty(cfg, calibrated_problem)
    assert beta >= 12.0 * math.sqrt(2.0)


def test_grid_search_prefers_the_stable_step(calibrated_config):
    cfg = calibrated_config(**{"solver.alpha": None, "solver.tol": 1e-4, "solver.max_iters": 3000})
    outcome = harness.grid_search(cfg, [5000.0, 2.5])
    assert [p.beta_hat for p in outcome.points] == [5000.0, 2.5]
    assert outcome.points[0].reason == "divergence"
    assert outcome.has_winner
    assert outcome.best.beta_hat == 2.5 and outcome.best.reached
    assert outcome.best_config.solver.beta_hat == 2.5


def test_grid_search_without_winner(calibrated_config, caplog):
    cfg = calibrated_config(**{"solver.alpha": None, "solver.max_iters": 100})
    outcome = harness.grid_search(cfg, [5000.0, 10000.0])
    assert not outcome.has_winner
    assert outcome.best is None
    assert "no winner" in caplog.text


def test_grid_search_rejects_empty_grid(calibrated_config):
    with pytest.raises(ParameterError):
        harness.grid_search(calibrated_config(), [])


def test_rank_key_orders_reasons():
    reached = harness.GridPoint(1e-3, 1e-5, "tolerance", 500, 1e-9)
    slower = harness.GridPoint(2e-3, 2e-5, "tolerance", 800, 1e-9)
    budget = harness.GridPoint(3e-3, 3e-5, "budget", 1000, 1e-3)
    diverged = harness.GridPoint(4e-3, 4e-5, "divergence", 3, math.nan)
    ranked = sorted([diverged, budget, slower, reached], key=harness.rank_key)
    assert ranked == [reached, slower, budget, diverged]


def test_theory_suite_spectrum_checks(calibrated_config):
    lines = harness.run_theory_suite(calibrated_config(), checks=["transition_spectrum", "topology_sweep"])
    assert [name for name, _, _ in lines] == ["transition_spectrum", "topology_sweep"]
    assert all(passed for _, passed, _ in lines)
    assert lines[1][2].startswith("CHECK topology_sweep PASS combinations=54")


def test_trace_record_fields_match_csv_columns():
    assert list(harness.TraceRecord.__dataclass_fields__) == TRACE_COLUMNS


@pytest.mark.slow
def test_full_theory_suite_passes_on_calibrated_instance(calibrated_config):
    cfg = calibrated_config(**{"solver.alpha": None, "solver.beta_penalty": None,
                               "theory.rate_alpha": 0.05, "theory.rate_beta": 1.0})
    lines = harness.run_theory_suite(cfg)
    assert [name for name, _, _ in lines] == list(harness.THEORY_CHECKS)
    failed = [line for _, passed, line in lines if not passed]
    assert not failed



@pytest.mark.slow
def test_default_pca_config_converges(shipped_config):
    cfg = shipped_config("pca.cfg", **{"output.trace_every": 1000})
    result = harness.run_experiment(cfg)
    final = result.final
    assert result.reason == "tolerance"
    assert final.iter <= cfg.solver.max_iters
    assert final.stationarity < 1e-8
    assert final.consensus < 1e-8
    assert final.feasibility < 1e-8
    assert final.dist_solution < 1e-5


@pytest.mark.slow
def test_default_lrmc_config_converges_within_budget(shipped_config):
    cfg = shipped_config("lrmc.cfg", **{"output.trace_every": 100})
    result = harness.run_experiment(cfg)
    assert result.reason == "tolerance"
    assert result.final.iter <= 1500
    assert result.final.stationarity < 1e-6


@pytest.mark.slow
def test_lrmc_grid_has_a_stable_winner(shipped_config):
    cfg = shipped_config("lrmc.cfg", **{"output.trace_every": 100})
    grid = harness.grid_search(cfg, LRMC_BETA_HAT_GRID)
    assert grid.has_winner
    assert grid.best.reached
    assert grid.best.iterations <= 1500
    assert grid.best.final_stationarity < 1e-6


@pytest.mark.slow
def test_robustness_sweep_on_ring(shipped_config):
    cfg = shipped_config("pca.cfg", **{"graph.kind": "ring", "solver.tol": 1e-6, "output.trace_every": 500})
    results = harness.run_robustness_sweep(cfg, ROBUSTNESS_BETAS)
    assert set(results) == set(ROBUSTNESS_BETAS)
    for beta, result in results.items():
        assert result.reason != "divergence", beta
        assert math.isfinite(result.final.stationarity), beta
    for beta in (0.1, 1.0, 10.0):
        assert results[beta].reason == "tolerance"
        assert results[beta].final.stationarity < 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("method,beta_hat", [("dprgd", 0.02), ("rextra_style", 0.08)])
def test_baselines_approach_the_solution_on_default_instance(shipped_config, method, beta_hat):
    cfg = shipped_config("pca.cfg", **{"solver.name": method, "solver.beta_hat": beta_hat,
                                       "output.trace_every": 1000})
    result = harness.run_experiment(cfg)
    assert result.reason != "divergence"
    assert result.final.dist_solution < 1e-4
    if method == "rextra_style":
        assert result.reason == "tolerance"


@pytest.mark.slow
def test_rate_checks_pass_on_default_instance(shipped_config):
    checks = ["averaged_identities", "rate", "feasibility_rate", "consensus_summability"]
    lines = harness.run_theory_suite(shipped_config("pca.cfg"), checks)
    assert [name for name, _, _ in lines] == checks
    assert "iterations=2000" in lines[0][2]
    failed = [line for _, passed, line in lines if not passed]
    assert not failed


@pytest.mark.slow
@pytest.mark.parametrize("name", ["pca.cfg", "lrmc.cfg"])
def test_coercivity_holds_at_sampled_floor(shipped_config, name):
    cfg = shipped_config(name, **{"theory.samples": 1000, "theory.pairs": 100})
    lines = harness.run_theory_suite(cfg, ["coercivity"])
    assert len(lines) == 1
    _, passed, line = lines[0]
    assert passed, line
    assert "violations=0" in line
    assert "samples=1000" in line
