# src/experiment_config.py
# Experiment configuration: typed settings plus the line-oriented `section.key = value` file format.
#
# Defaults depend on the problem kind (dimensions, graph, step-size reference, thresholds), so a
# configuration is always built from the flat mapping of explicitly given keys; overrides are
# merged into that mapping and the whole configuration is resolved again.

import logging
from dataclasses import dataclass, replace

from src.config import (CONSTANT_PAIRS, DEFAULT_THETA, DEFAULT_TRACE_EVERY, DPRGD_MNIST_BETA_HAT,
                        DPRGD_PCA_BETA_HAT, IDENTITY_ITERS,
                        LRMC_MAX_EPOCHS, LRMC_REFERENCE_BETA_HAT, LRMC_RIDGE, LRMC_TOL, MIN_CONSTANT_PAIRS,
                        MNIST_MAX_ITERS, MNIST_REFERENCE_BETA_HAT, MNIST_TOL, MNIST_TRACE_EVERY,
                        MNIST_TRAIN_IMAGES, PCA_MAX_ITERS, PCA_REFERENCE_BETA_HAT,
                        PCA_SYNTHETIC_TOL, RATE_ITERS, RATE_KMIN, REGION_SAMPLES)
from src.errors import ConfigError
from src.network import TOPOLOGY_KINDS
from src.solvers import SOLVER_NAMES

PROBLEM_KINDS = ("pca_synthetic", "pca_mnist", "lrmc")
GRAPH_KINDS = TOPOLOGY_KINDS + ("file",)

SCHEMA = {
    "problem.kind": str, "problem.n": int, "problem.m": int, "problem.d": int, "problem.r": int,
    "problem.xi": float, "problem.scale": float, "problem.T": int, "problem.noise": float,
    "problem.ridge": float, "problem.path": str, "problem.seed": int,
    "graph.kind": str, "graph.p": float, "graph.path": str, "graph.seed": int, "graph.theta": float,
    "solver.name": str, "solver.beta_hat": float, "solver.beta_penalty": float, "solver.alpha": float,
    "solver.max_iters": int, "solver.tol": float, "solver.init_seed": int,
    "output.csv": str, "output.trace_every": int,
    "theory.samples": int, "theory.pairs": int, "theory.seed": int, "theory.identity_iters": int,
    "theory.rate_iters": int, "theory.rate_kmin": int, "theory.rate_alpha": float, "theory.rate_beta": float,
}

# Problem keys each kind accepts, with their defaults; an unset synthetic scale means sqrt(n * m)
PROBLEM_DEFAULTS = {
    "pca_synthetic": {"n": 8, "m": 1000, "d": 10, "r": 5, "xi": 0.8, "scale": None, "seed": 0},
    "pca_mnist": {"n": 8, "r": 2, "seed": 0, "path": MNIST_TRAIN_IMAGES},
    "lrmc": {"n": 8, "d": 100, "r": 5, "T": 1000, "noise": 1e-3, "ridge": LRMC_RIDGE, "seed": 0},
}

KIND_DEFAULTS = {
    "pca_synthetic": {"graph.kind": "erdos_renyi", "solver.beta_hat": PCA_REFERENCE_BETA_HAT,
                      "solver.max_iters": PCA_MAX_ITERS, "solver.tol": PCA_SYNTHETIC_TOL,
                      "output.trace_every": DEFAULT_TRACE_EVERY},
    "pca_mnist": {"graph.kind": "erdos_renyi", "solver.beta_hat": MNIST_REFERENCE_BETA_HAT,
                  "solver.max_iters": MNIST_MAX_ITERS, "solver.tol": MNIST_TOL,
                  "output.trace_every": MNIST_TRACE_EVERY},
    "lrmc": {"graph.kind": "ring", "solver.beta_hat": LRMC_REFERENCE_BETA_HAT,
             "solver.max_iters": LRMC_MAX_EPOCHS, "solver.tol": LRMC_TOL,
             "output.trace_every": DEFAULT_TRACE_EVERY},
}

# Reference step sizes of the retraction-based baseline, used when solver.name = dprgd
DPRGD_BETA_HAT = {"pca_synthetic": DPRGD_PCA_BETA_HAT, "pca_mnist": DPRGD_MNIST_BETA_HAT}


@dataclass(frozen=True)
class ProblemSettings:
    kind: str
    n: int
    r: int
    seed: int
    d: int = None
    m: int = None
    xi: float = None
    scale: float = None
    T: int = None
    noise: float = None
    ridge: float = None
    path: str = None


@dataclass(frozen=True)
class GraphSettings:
    kind: str
    p: float = 0.6
    path: str = None
    seed: int = 0
    theta: float = DEFAULT_THETA


@dataclass(frozen=True)
class SolverSettings:
    """beta_hat is the raw grid value; alpha, when given, bypasses the per-problem scaling."""
    name: str
    beta_hat: float
    max_iters: int
    tol: float
    beta_penalty: float = None
    alpha: float = None
    init_seed: int = 0


@dataclass(frozen=True)
class OutputSettings:
    csv: str = None
    trace_every: int = DEFAULT_TRACE_EVERY


@dataclass(frozen=True)
class TheorySettings:
    samples: int = REGION_SAMPLES
    pairs: int = CONSTANT_PAIRS
    seed: int = 0
    identity_iters: int = IDENTITY_ITERS
    rate_iters: int = RATE_ITERS
    rate_kmin: int = RATE_KMIN
    rate_alpha: float = None
    rate_beta: float = None


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved experiment configuration.

    `explicit` keeps the (key, value) pairs that were actually given, so overrides can be
    re-resolved against kind-dependent defaults.
    """
    problem: ProblemSettings
    graph: GraphSettings
    solver: SolverSettings
    output: OutputSettings
    theory: TheorySettings
    explicit: tuple = ()

    def with_solver(self, **changes):
        """Copy with some solver fields replaced (used for grid points)."""
        return replace(self, solver=replace(self.solver, **changes))


def _coerce(key, raw):
    kind = SCHEMA[key]
    if raw is None:
        return None
    if not isinstance(raw, str):
        value = raw
    else:
        text = raw.strip()
        if text.lower() in ("", "none", "null"):
            return None
        value = text
    try:
        if kind is int:
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(f"{value} is not an integer")
            return int(as_float)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value '{raw}' for {key}: {e}", key=key) from e


def parse_config_text(text, source="<config>"):
    """
    Parses `section.key = value` lines; `#` starts a comment.

    Args:
        text (str): File contents.
        source (str): Name used in error messages.

    Returns:
        dict: Raw string values keyed by `section.key`.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got '{line}'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown configuration key '{key}'", key=key)
        values[key] = raw
    return values


def parse_overrides(pairs):
    """Turns `section.key=value` strings (CLI --set flags) into a mapping."""
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"Override '{pair}' is not of the form section.key=value")
        key, raw = (part.strip() for part in pair.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"Unknown configuration key '{key}'", key=key)
        values[key] = raw
    return values


def _fail(key, message):
    raise ConfigError(f"{key}: {message}", key=key)


def _validate(cfg):
    p, g, s, o, t = cfg.problem, cfg.graph, cfg.solver, cfg.output, cfg.theory
    if p.n < 2:
        _fail("problem.n", f"need at least 2 agents, got {p.n}")
    if p.r < 1:
        _fail("problem.r", f"must be positive, got {p.r}")
    if p.kind == "pca_synthetic":
        if p.d < p.r:
            _fail("problem.d", f"d={p.d} is smaller than r={p.r}")
        if p.m < 1 or p.m * p.n < p.d:
            _fail("problem.m", f"m * n = {p.m * p.n} rows cannot span d={p.d}")
        if not (0.0 < p.xi < 1.0):
            _fail("problem.xi", f"must lie in (0, 1), got {p.xi}")
        if p.scale is not None and not p.scale > 0.0:
            _fail("problem.scale", f"must be positive, got {p.scale}")
    elif p.kind == "lrmc":
        if p.r > min(p.d, p.T):
            _fail("problem.r", f"r={p.r} exceeds min(d, T)={min(p.d, p.T)}")
        if p.T % p.n != 0:
            _fail("problem.T", f"T={p.T} is not divisible by n={p.n}")
        if p.noise < 0.0:
            _fail("problem.noise", f"must be nonnegative, got {p.noise}")
        if p.ridge < 0.0:
            _fail("problem.ridge", f"must be nonnegative, got {p.ridge}")
    elif not p.path:
        _fail("problem.path", "an IDX image file is required for pca_mnist")

    if g.kind not in GRAPH_KINDS:
        _fail("graph.kind", f"unknown kind '{g.kind}', expected one of {GRAPH_KINDS}")
    if g.kind == "erdos_renyi" and (g.p is None or not (0.0 < g.p <= 1.0)):
        _fail("graph.p", f"must lie in (0, 1], got {g.p}")
    if g.kind == "file" and not g.path:
        _fail("graph.path", "a graph file is required for kind 'file'")
    if not (0.0 < g.theta <= 0.5):
        _fail("graph.theta", f"must lie in (0, 1/2], got {g.theta}")

    if s.name not in SOLVER_NAMES:
        _fail("solver.name", f"unknown solver '{s.name}', expected one of {SOLVER_NAMES}")
    if s.alpha is None and not (s.beta_hat is not None and s.beta_hat > 0.0):
        _fail("solver.beta_hat", f"must be positive, got {s.beta_hat}")
    if s.alpha is not None and not s.alpha > 0.0:
        _fail("solver.alpha", f"must be positive, got {s.alpha}")
    if s.beta_penalty is not None and not s.beta_penalty > 0.0:
        _fail("solver.beta_penalty", f"must be positive, got {s.beta_penalty}")
    if s.max_iters < 1:
        _fail("solver.max_iters", f"must be at least 1, got {s.max_iters}")
    if s.tol < 0.0:
        _fail("solver.tol", f"must be nonnegative, got {s.tol}")
    if o.trace_every < 1:
        _fail("output.trace_every", f"must be at least 1, got {o.trace_every}")

    if t.samples < 1:
        _fail("theory.samples", f"must be at least 1, got {t.samples}")
    if t.pairs < MIN_CONSTANT_PAIRS:
        _fail("theory.pairs", f"must be at least {MIN_CONSTANT_PAIRS}, got {t.pairs}")
    if t.rate_kmin < 10 or t.rate_iters < 10 * t.rate_kmin:
        _fail("theory.rate_iters", f"need rate_iters >= 10 * rate_kmin >= 100, got {t.rate_iters} and {t.rate_kmin}")
    if t.identity_iters < 1:
        _fail("theory.identity_iters", f"must be at least 1, got {t.identity_iters}")


def build_config(values=None):
    """
    Resolves a flat `section.key` mapping into an ExperimentConfig.

    Args:
        values (dict): Explicit values (strings or already typed); missing keys take defaults.

    Returns:
        ExperimentConfig: Validated configuration.

    Raises:
        ConfigError: On unknown keys, keys that do not apply to the problem kind or invalid values.
    """
    explicit = {}
    for key, raw in (values or {}).items():
        if key not in SCHEMA:
            raise ConfigError(f"Unknown configuration key '{key}'", key=key)
        explicit[key] = _coerce(key, raw)

    kind = explicit.get("problem.kind") or "pca_synthetic"
    if kind not in PROBLEM_KINDS:
        _fail("problem.kind", f"unknown kind '{kind}', expected one of {PROBLEM_KINDS}")

    problem_fields = dict(PROBLEM_DEFAULTS[kind])
    for key, value in explicit.items():
        section, name = key.split(".", 1)
        if section != "problem" or name == "kind":
            continue
        if name not in PROBLEM_DEFAULTS[kind]:
            _fail(key, f"does not apply to problem kind '{kind}'")
        if value is not None:
            problem_fields[name] = value

    def pick(key, default=None):
        value = explicit.get(key)
        if value is None:
            value = KIND_DEFAULTS[kind].get(key, default)
        return value

    def section(name):
        return {k.split(".", 1)[1]: v for k, v in explicit.items()
                if k.startswith(name + ".") and v is not None}

    graph_fields = section("graph")
    graph_fields["kind"] = pick("graph.kind")
    solver_fields = section("solver")
    solver_fields.setdefault("name", "rf_extra")
    for name in ("beta_hat", "max_iters", "tol"):
        solver_fields[name] = pick(f"solver.{name}")
    if solver_fields["name"] == "dprgd" and explicit.get("solver.beta_hat") is None:
        solver_fields["beta_hat"] = DPRGD_BETA_HAT.get(kind, solver_fields["beta_hat"])
    output_fields = section("output")
    output_fields["trace_every"] = pick("output.trace_every")

    cfg = ExperimentConfig(
        problem=ProblemSettings(kind=kind, **problem_fields),
        graph=GraphSettings(**graph_fields),
        solver=SolverSettings(**solver_fields),
        output=OutputSettings(**output_fields),
        theory=TheorySettings(**section("theory")),
        explicit=tuple(sorted((k, v) for k, v in explicit.items() if v is not None)),
    )
    _validate(cfg)
    return cfg


def load_config(path, overrides=None):
    """
    Reads a configuration file and applies overrides on top of it.

    Args:
        path (str): Path to the `section.key = value` file.
        overrides (dict): Extra `section.key` values taking precedence over the file.

    Returns:
        ExperimentConfig: The resolved configuration.
    """
    logging.info(f"Loading experiment configuration from {path}")
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except FileNotFoundError:
        logging.error(f"Error: configuration file not found at {path}")
        raise
    values = parse_config_text(text, source=str(path))
    values.update(overrides or {})
    return build_config(values)


def apply_overrides(cfg, overrides):
    """Returns cfg re-resolved with extra `section.key` values."""
    values = dict(cfg.explicit)
    values.update(overrides)
    return build_config(values)
