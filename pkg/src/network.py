# src/network.py
# Communication graphs, Metropolis mixing matrices and the EXTRA correction matrix.

import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from src.config import DEFAULT_THETA, ER_MAX_ATTEMPTS, SYMMETRY_TOL
from src.errors import DimensionError, FormatError, GenerationError, ParameterError
from src.matops import second_largest_singular_value

TOPOLOGY_KINDS = ("ring", "star", "complete", "erdos_renyi")


@dataclass(frozen=True)
class Topology:
    """
    Undirected connected graph on agents 0..n-1.

    Attributes:
        n (int): Agent count.
        edges (frozenset): Pairs (i, j) with i < j.
    """
    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"Topology needs at least one agent, got n={self.n}")
        for i, j in self.edges:
            if i == j:
                raise ParameterError(f"Self-loop on agent {i}")
            if not (0 <= i < j < self.n):
                raise ParameterError(f"Edge ({i}, {j}) is not a normalized pair of agents below {self.n}")
        if not nx.is_connected(self.to_graph()):
            raise ParameterError(f"Graph on {self.n} agents with {len(self.edges)} edges is not connected")

    @classmethod
    def from_graph(cls, graph):
        """Builds a Topology from a networkx graph with nodes 0..n-1."""
        edges = frozenset(tuple(sorted((int(u), int(v)))) for u, v in graph.edges() if u != v)
        return cls(graph.number_of_nodes(), edges)

    def to_graph(self):
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph

    def degrees(self):
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg


@dataclass(frozen=True, eq=False)
class MixingPair:
    """
    Mixing matrix W and correction matrix V = theta I + (1 - theta) W.

    Both arrays are read-only once constructed.
    """
    W: np.ndarray
    V: np.ndarray
    theta: float
    sigma2: float
    degree_sum: int = field(default=0)

    @property
    def n(self):
        return self.W.shape[0]


def build_topology(kind, n, p=None, seed=None):
    """
    Builds a connected communication graph.

    Args:
        kind (str): One of ring, star, complete, erdos_renyi.
        n (int): Number of agents, at least 2.
        p (float): Edge probability for erdos_renyi, in (0, 1].
        seed (int): Seed for erdos_renyi sampling.

    Returns:
        Topology: The connected graph.

    Raises:
        ParameterError: For n < 2, an unknown kind or p outside (0, 1].
        GenerationError: If ER_MAX_ATTEMPTS Erdos-Renyi draws are all disconnected.
    """
    if n < 2:
        raise ParameterError(f"A network needs at least 2 agents, got n={n}")
    if kind == "ring":
        return Topology.from_graph(nx.cycle_graph(n))
    if kind == "star":
        return Topology.from_graph(nx.star_graph(n - 1))
    if kind == "complete":
        return Topology.from_graph(nx.complete_graph(n))
    if kind != "erdos_renyi":
        raise ParameterError(f"Unknown topology kind '{kind}', expected one of {TOPOLOGY_KINDS}")

    if p is None or not (0.0 < p <= 1.0):
        raise ParameterError(f"Erdos-Renyi edge probability must lie in (0, 1], got {p}")
    # Each attempt draws a whole new graph from its own child seed
    for attempt, child in enumerate(np.random.SeedSequence(seed).spawn(ER_MAX_ATTEMPTS)):
        graph = nx.erdos_renyi_graph(n, p, seed=int(child.generate_state(1)[0]))
        if nx.is_connected(graph):
            logging.info(f"ER({p}) graph on {n} agents connected after {attempt + 1} draw(s), {graph.number_of_edges()} edges")
            return Topology.from_graph(graph)
    raise GenerationError(f"ER({p}) sampling on {n} agents stayed disconnected after {ER_MAX_ATTEMPTS} draws")


def metropolis_weights(t):
    """
    Metropolis-Hastings mixing matrix of a topology.

    w_ij = 1 / (1 + max(deg_i, deg_j)) on edges and w_ii = 1 - sum_j w_ij.

    Args:
        t (Topology): Connected graph.

    Returns:
        ndarray: Symmetric doubly stochastic n x n matrix W.
    """
    deg = t.degrees()
    W = np.zeros((t.n, t.n))
    for i, j in t.edges:
        w = 1.0 / (1.0 + max(deg[i], deg[j]))
        W[i, j] = w
        W[j, i] = w
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return W


def with_correction(W, theta=DEFAULT_THETA):
    """
    Pairs a mixing matrix with its EXTRA correction matrix.

    Args:
        W (ndarray): Symmetric doubly stochastic nonnegative matrix.
        theta (float): Correction weight in (0, 1/2].

    Returns:
        MixingPair: W, V = theta I + (1 - theta) W and sigma_2(W).
    """
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError(f"Mixing matrix must be square, got shape {W.shape}")
    if not (0.0 < theta <= 0.5):
        raise ParameterError(f"theta must lie in (0, 1/2], got {theta}")
    if np.linalg.norm(W - W.T) > SYMMETRY_TOL:
        raise ParameterError("Mixing matrix is not symmetric")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > SYMMETRY_TOL:
        raise ParameterError("Mixing matrix rows do not sum to one")
    if W.min() < 0.0:
        raise ParameterError("Mixing matrix has negative entries")

    n = W.shape[0]
    V = theta * np.eye(n) + (1.0 - theta) * W
    sigma2 = second_largest_singular_value(W)
    if n > 1 and sigma2 >= 1.0:
        logging.warning(f"sigma_2(W) = {sigma2:.6f} >= 1: the mixing matrix does not contract disagreement")
    off_diagonal = W - np.diag(np.diag(W))
    W.setflags(write=False)
    V.setflags(write=False)
    return MixingPair(W=W, V=V, theta=float(theta), sigma2=sigma2, degree_sum=int(np.count_nonzero(off_diagonal)))


def build_joint_transition(mp):
    """
    Agent-level EXTRA state matrix P = [[W - J, I], [W - V, I - J]] with J = (1/n) 1 1^T.

    Args:
        mp (MixingPair): The network matrices.

    Returns:
        ndarray: 2n x 2n transition matrix.
    """
    n = mp.n
    J = np.full((n, n), 1.0 / n)
    I = np.eye(n)
    return np.block([[mp.W - J, I], [mp.W - mp.V, I - J]])


def read_graph_file(path):
    """
    Reads an edge list: first line n, then one `i j` pair (0-based) per line.

    Args:
        path (str): Path to the graph file.

    Returns:
        Topology: The parsed connected graph.
    """
    logging.info(f"Reading graph file {path}")
    try:
        with open(path, "r") as fh:
            lines = [line.strip() for line in fh if line.strip() and not line.strip().startswith("#")]
    except FileNotFoundError:
        logging.error(f"Error: graph file not found at {path}")
        raise

    if not lines:
        raise FormatError(f"Graph file {path} is empty")
    try:
        n = int(lines[0])
        edges = set()
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'i j', got '{line}'")
            i, j = int(parts[0]), int(parts[1])
            edges.add((min(i, j), max(i, j)))
    except ValueError as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"Graph file {path} contains a non-integer token: {e}") from e
    return Topology(n, frozenset(edges))


def write_graph_file(topology, path):
    """Writes a topology in the edge-list format read by read_graph_file."""
    lines = [str(topology.n)] + [f"{i} {j}" for i, j in sorted(topology.edges)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    logging.info(f"Wrote graph with {topology.n} agents and {len(topology.edges)} edges to {path}")
