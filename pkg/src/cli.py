# src/cli.py
# Command-line surface: run, grid, theory, robustness and gen.
#
# Exit codes: 0 on success, 1 when a run diverges, a grid has no winner or a theory check fails,
# 2 on invalid configuration or arguments.

import functools
import logging
import math
import os
import sys

import click

from src import harness, report, simulate_data
from src.config import (DEFAULT_GRID_SUMMARY_CSV, LOG_FORMAT, MNIST_BETA_HAT_GRID, PCA_BETA_HAT_GRID,
                        LRMC_BETA_HAT_GRID, ROBUSTNESS_BETAS, RUNTIME_CONFIG)
from src.errors import ConfigError, FormatError, ParameterError
from src.experiment_config import PROBLEM_DEFAULTS, build_config, parse_config_text, parse_overrides

DEFAULT_GRIDS = {
    "pca_synthetic": PCA_BETA_HAT_GRID,
    "pca_mnist": MNIST_BETA_HAT_GRID,
    "lrmc": LRMC_BETA_HAT_GRID,
}

# Calibrated instance on which the rate checks have a visible asymptotic regime
THEORY_DEFAULTS = {
    "problem.kind": "pca_synthetic", "problem.n": 4, "problem.m": 50, "problem.d": 6, "problem.r": 2,
    "problem.xi": 0.5, "problem.scale": 4.0, "problem.seed": 0,
    "graph.kind": "erdos_renyi", "graph.p": 0.6,
    "theory.rate_alpha": 0.05, "theory.rate_beta": 1.0,
}


def _resolve_config(config_path, settings, mnist=False, graph_file=None, base=None, **flags):
    """Merges file values, --set pairs and dedicated flags (highest precedence) into a config."""
    try:
        values = dict(base or {})
        if config_path:
            with open(config_path, "r") as fh:
                values.update(parse_config_text(fh.read(), source=config_path))
        values.update(parse_overrides(settings))
        if mnist:
            values["problem.kind"] = "pca_mnist"
            values = {k: v for k, v in values.items()
                      if not k.startswith("problem.") or k == "problem.kind"
                      or k.split(".", 1)[1] in PROBLEM_DEFAULTS["pca_mnist"]}
        if graph_file:
            values["graph.kind"] = "file"
            values["graph.path"] = graph_file
        for key, value in flags.items():
            if value is not None:
                values[key] = value
        return build_config(values)
    except (ConfigError, FormatError) as e:
        raise click.UsageError(str(e)) from e


def _usage_errors(fn):
    """Reports invalid inputs found while building problems or networks as usage errors (exit 2)."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, FormatError, ParameterError, FileNotFoundError) as e:
            logging.error(f"Invalid input: {e}")
            raise click.UsageError(str(e)) from e
    return wrapper


def _common_options(fn):
    fn = click.option("--set", "settings", multiple=True, metavar="KEY=VALUE",
                      help="Override a configuration key, e.g. solver.tol=1e-6.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      help="Experiment configuration file.")(fn)
    fn = click.option("--mnist", is_flag=True, help="Use the MNIST PCA problem.")(fn)
    fn = click.option("--graph-file", type=click.Path(exists=True, dir_okay=False),
                      help="Read the network from an edge-list file.")(fn)
    fn = click.option("--solver", type=click.Choice(["rf_extra", "dprgd", "rextra_style"]))(fn)
    return fn


@click.group()
@click.option("--log-level", default=None, help="Console log level (defaults to RFEXTRA_LOG_LEVEL).")
def cli(log_level):
    """Retraction-free decentralized optimization on the Stiefel manifold."""
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(level=RUNTIME_CONFIG.log_level, format=LOG_FORMAT)
    if log_level:
        root.setLevel(log_level.upper())


@cli.command()
@_common_options
@_usage_errors
@click.option("--csv", "csv_path", help="Trace CSV destination.")
@click.option("--beta-hat", type=float)
@click.option("--max-iters", type=int)
@click.option("--tol", type=float)
def run(config_path, settings, mnist, graph_file, solver, csv_path, beta_hat, max_iters, tol):
    """Run one experiment and write its trace."""
    cfg = _resolve_config(config_path, settings, mnist, graph_file, **{
        "solver.name": solver, "output.csv": csv_path, "solver.beta_hat": beta_hat,
        "solver.max_iters": max_iters, "solver.tol": tol})
    result = harness.run_experiment(cfg)
    if cfg.output.csv:
        report.emit_csv(result.trace, cfg.output.csv)
    final = result.final
    click.echo(f"{result.method}: {result.reason} after {final.iter} iterations, "
               f"stationarity={final.stationarity:.6e}, consensus={final.consensus:.6e}")
    if result.reason == "divergence":
        sys.exit(1)


@cli.command()
@_common_options
@_usage_errors
@click.option("--grid", "grid_values", help="Comma-separated beta_hat values.")
@click.option("--workers", type=int, default=None, help="Worker processes (defaults to RFEXTRA_GRID_WORKERS).")
@click.option("--summary-csv", default=DEFAULT_GRID_SUMMARY_CSV, show_default=True)
@click.option("--csv", "csv_path", help="Trace CSV of the winning point.")
def grid(config_path, settings, mnist, graph_file, solver, grid_values, workers, summary_csv, csv_path):
    """Sweep the step size and report the best point."""
    cfg = _resolve_config(config_path, settings, mnist, graph_file, **{"solver.name": solver})
    if grid_values:
        try:
            values = [float(v) for v in grid_values.split(",") if v.strip()]
        except ValueError as e:
            raise click.UsageError(f"Invalid --grid value: {e}") from e
    else:
        values = list(DEFAULT_GRIDS[cfg.problem.kind])
    if not values:
        raise click.UsageError("--grid is empty")

    outcome = harness.grid_search(cfg, values, workers=workers or RUNTIME_CONFIG.GRID_WORKERS)
    report.write_grid_summary(outcome.points, summary_csv)
    if not outcome.has_winner:
        click.echo("No winner: every grid point diverged")
        sys.exit(1)
    best = outcome.best
    click.echo(f"best beta_hat={best.beta_hat:g} alpha={best.alpha:.6g} ({best.reason}, {best.iterations} iterations)")
    if csv_path:
        report.emit_csv(harness.run_experiment(outcome.best_config).trace, csv_path)


@cli.command()
@_common_options
@_usage_errors
@click.option("--all", "run_all", is_flag=True, help="Run every check (the default).")
@click.option("--check", "checks", multiple=True, type=click.Choice(harness.THEORY_CHECKS))
def theory(config_path, settings, mnist, graph_file, solver, run_all, checks):
    """Run the theory checks and print one CHECK line each."""
    base = None if config_path else THEORY_DEFAULTS
    cfg = _resolve_config(config_path, settings, mnist, graph_file, base=base, **{"solver.name": solver})
    lines = harness.run_theory_suite(cfg, checks=None if run_all or not checks else list(checks))
    for _, _, line in lines:
        click.echo(line)
    if not all(passed for _, passed, _ in lines):
        sys.exit(1)


@cli.command()
@_common_options
@_usage_errors
@click.option("--output-dir", default=None, help="Directory for one trace CSV per penalty value.")
@click.option("--beta", "betas", multiple=True, type=float, help="Penalty values (defaults to the standard sweep).")
def robustness(config_path, settings, mnist, graph_file, solver, output_dir, betas):
    """Run RF-EXTRA at a fixed step for several penalty values."""
    cfg = _resolve_config(config_path, settings, mnist, graph_file)
    results = harness.run_robustness_sweep(cfg, betas or ROBUSTNESS_BETAS)
    for beta, result in results.items():
        final = result.final
        click.echo(f"beta={beta:g}: {result.reason} after {final.iter} iterations, stationarity={final.stationarity:.6e}")
        if output_dir:
            report.emit_csv(result.trace, os.path.join(output_dir, f"trace_beta_{beta:g}.csv"))
    if any(result.reason == "divergence" for result in results.values()):
        sys.exit(1)


@cli.group()
def gen():
    """Generate instances and input files."""


@gen.command("pca")
@_usage_errors
@click.argument("output_path")
@click.option("--n", default=8)
@click.option("--m", default=1000)
@click.option("--d", default=10)
@click.option("--r", default=5)
@click.option("--xi", default=0.8)
@click.option("--scale", type=float, default=None, help="Spectrum multiplier (defaults to sqrt(n * m)).")
@click.option("--seed", default=0)
def gen_pca(output_path, n, m, d, r, xi, scale, seed):
    """Write a synthetic PCA instance as an .npz archive."""
    simulate_data.simulate_pca_archive(output_path, n=n, m_per_agent=m, d=d, r=r, xi=xi, seed=seed,
                                       scale=scale if scale is not None else math.sqrt(n * m))
    click.echo(f"wrote {output_path}")


@gen.command("lrmc")
@_usage_errors
@click.argument("output_path")
@click.option("--n", default=8)
@click.option("--d", default=100)
@click.option("--r", default=5)
@click.option("--T", "T", default=1000)
@click.option("--noise", default=1e-3)
@click.option("--seed", default=0)
def gen_lrmc(output_path, n, d, r, T, noise, seed):
    """Write a low-rank completion instance as an .npz archive."""
    simulate_data.simulate_lrmc_archive(output_path, n=n, d=d, r=r, T=T, noise=noise, seed=seed)
    click.echo(f"wrote {output_path}")


@gen.command("graph")
@_usage_errors
@click.argument("output_path")
@click.option("--kind", type=click.Choice(["ring", "star", "complete", "erdos_renyi"]), default="erdos_renyi")
@click.option("--n", default=8)
@click.option("--p", default=0.6)
@click.option("--seed", default=0)
def gen_graph(output_path, kind, n, p, seed):
    """Write a sampled topology as an edge list."""
    simulate_data.simulate_graph_file(output_path, kind, n, p=p, seed=seed)
    click.echo(f"wrote {output_path}")


@gen.command("idx")
@_usage_errors
@click.argument("output_path")
@click.option("--count", default=64)
@click.option("--rows", default=8)
@click.option("--cols", default=8)
@click.option("--seed", default=0)
def gen_idx(output_path, count, rows, cols, seed):
    """Write random images in IDX layout."""
    simulate_data.simulate_idx_images(output_path, count=count, rows=rows, cols=cols, seed=seed)
    click.echo(f"wrote {output_path}")


def cli_main(argv=None):
    """Runs the CLI and returns its exit code instead of exiting."""
    try:
        cli.main(args=argv, prog_name="rf-extra", standalone_mode=True)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (0 if e.code is None else 1)
    return 0


if __name__ == "__main__":
    sys.exit(cli_main())
