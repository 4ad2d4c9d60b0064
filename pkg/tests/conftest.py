# tests/conftest.py
# Shared fixtures: a small well-conditioned PCA instance, networks on it and a finite-difference helper.

from pathlib import Path

import numpy as np
import pytest

from src.config import FD_STEP_SCALE
from src.experiment_config import build_config, load_config
from src.network import build_topology, metropolis_weights, with_correction
from src.problems import generate_synthetic_pca

# Top eigenvalue 1 and eigengap 0.1875 for r = 2 under the mean objective
CALIBRATED = {"n": 4, "m_per_agent": 50, "d": 6, "r": 2, "xi": 0.5, "scale": 4.0, "seed": 0}

CALIBRATED_CONFIG = {
    "problem.kind": "pca_synthetic", "problem.n": 4, "problem.m": 50, "problem.d": 6, "problem.r": 2,
    "problem.xi": 0.5, "problem.scale": 4.0, "problem.seed": 0,
    "graph.kind": "erdos_renyi", "graph.p": 0.6, "graph.seed": 0,
    "solver.alpha": 0.05, "solver.beta_penalty": 1.0,
}


@pytest.fixture
def calibrated_problem():
    return generate_synthetic_pca(**CALIBRATED)


@pytest.fixture
def er_mixing():
    return with_correction(metropolis_weights(build_topology("erdos_renyi", 4, p=0.6, seed=0)), 0.5)


@pytest.fixture
def ring_mixing():
    return with_correction(metropolis_weights(build_topology("ring", 4)), 0.5)


@pytest.fixture
def calibrated_config():
    def make(**overrides):
        values = dict(CALIBRATED_CONFIG)
        values.update(overrides)
        return build_config(values)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def directional_fd(fn, X, E, h=None):
    """Central difference (fn(X + hE) - fn(X - hE)) / 2h with h scaled to X."""
    if h is None:
        h = FD_STEP_SCALE * (1.0 + np.linalg.norm(X))
    return (fn(X + h * E) - fn(X - h * E)) / (2.0 * h)


CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def shipped_config():
    """Loads a file from configs/ with output files disabled and overrides applied."""
    def make(name, **overrides):
        values = {"output.csv": None}
        values.update(overrides)
        return load_config(str(CONFIG_DIR / name), values)
    return make
