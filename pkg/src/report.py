# src/report.py
# Module for writing run traces and grid-search summaries as CSV files.

import logging
import os
from dataclasses import asdict

import pandas as pd

from src.errors import FormatError, OutputError

TRACE_COLUMNS = ["iter", "comm_rounds", "gradient_evals", "stationarity", "consensus", "feasibility",
                 "dist_solution", "fval", "surrogate_norm", "wall_ms"]
GRID_COLUMNS = ["beta_hat", "alpha", "reason", "iterations", "final_stationarity"]


def _ensure_parent(path):
    output_dir = os.path.dirname(str(path))
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)
        logging.info(f"Created output directory: {output_dir}")


def _write_frame(df, path, what):
    try:
        _ensure_parent(path)
        # Round-trip precision; missing metrics become empty cells
        df.to_csv(path, index=False, float_format="%.17g", na_rep="")
    except OSError as e:
        logging.error(f"Error writing {what} to {path}: {e}")
        raise OutputError(f"Cannot write {what}: {e}", path) from e
    logging.info(f"{what.capitalize()} written to {path} with {len(df)} rows.")


def emit_csv(trace, path):
    """
    Writes a run trace, one row per recorded iteration.

    Args:
        trace (list): TraceRecord rows; an empty list produces a header-only file.
        path (str): Destination CSV path; parent directories are created.
    """
    df = pd.DataFrame([asdict(record) for record in trace], columns=TRACE_COLUMNS)
    _write_frame(df, path, "trace")


def load_trace_csv(path):
    """Reads a trace written by emit_csv back into a DataFrame."""
    df = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in TRACE_COLUMNS if c not in df.columns]
    if missing:
        raise FormatError(f"{path} is not a trace file, missing columns {missing}")
    return df


def write_grid_summary(points, path):
    """Writes one row per grid point in grid order."""
    rows = [{name: getattr(point, name) for name in GRID_COLUMNS} for point in points]
    _write_frame(pd.DataFrame(rows, columns=GRID_COLUMNS), path, "grid summary")
