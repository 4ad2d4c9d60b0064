# src/problems.py
# Benchmark problem families: decentralized PCA (synthetic and MNIST) and decentralized
# low-rank matrix completion. Every problem owns the per-agent data and exposes local
# objectives f_i, their gradients and an optional reference solution.
#
# Random instances use numpy's Generator with the PCG64 bit generator, seeded once per
# generator call through numpy.random.default_rng(seed), so a (parameters, seed) pair
# always reproduces the same instance.

import functools
import logging
from abc import ABC, abstractmethod

import numpy as np
import scipy.linalg

from src.config import LRMC_RIDGE
from src.errors import DimensionError, ParameterError
from src.ingest import read_idx_images
from src.matops import polar_orthonormalize


class Problem(ABC):
    """
    Decentralized objective f = (1/n) sum_i f_i over d x r matrices.

    Subclasses set n, d, r and alpha_scale and implement the local oracles.
    """

    n = 0
    d = 0
    r = 0
    alpha_scale = 1.0

    @abstractmethod
    def local_value(self, agent, X):
        """f_i(X)."""

    @abstractmethod
    def local_gradient(self, agent, X):
        """grad f_i(X)."""

    def _check_agent(self, agent):
        if not (0 <= agent < self.n):
            raise ParameterError(f"Agent index {agent} out of range for {self.n} agents")

    def local_gradient_fn(self, agent):
        """Returns grad f_i as a one-argument callable."""
        self._check_agent(agent)
        return functools.partial(self.local_gradient, agent)

    def global_value(self, X):
        return sum(self.local_value(i, X) for i in range(self.n)) / self.n

    def global_gradient(self, X):
        total = self.local_gradient(0, X)
        for i in range(1, self.n):
            total = total + self.local_gradient(i, X)
        return total / self.n

    @property
    def reference(self):
        """Reference solution for the distance metric, or None when unknown."""
        return None

    def effective_step(self, beta_hat):
        """Step size alpha = beta_hat / alpha_scale."""
        return beta_hat / self.alpha_scale


class PcaProblem(Problem):
    """
    Decentralized PCA: f_i(X) = -1/2 tr(X^T A_i^T A_i X).

    Args:
        blocks (list): Per-agent data matrices A_i of shape (m_i, d).
        r (int): Number of components.
        reference (ndarray): Known solution; computed by a dense eigensolve when omitted.
        alpha_scale (float): Step-size denominator; defaults to sum(m_i) / n.
    """

    def __init__(self, blocks, r, reference=None, alpha_scale=None):
        if not blocks:
            raise ParameterError("PcaProblem needs at least one data block")
        self.blocks = [np.asarray(A, dtype=float) for A in blocks]
        self.n = len(self.blocks)
        self.d = self.blocks[0].shape[1]
        if any(A.ndim != 2 or A.shape[1] != self.d for A in self.blocks):
            raise DimensionError("All PCA blocks must be 2-D with the same column count")
        if not (1 <= r <= self.d):
            raise ParameterError(f"Need 1 <= r <= d, got r={r}, d={self.d}")
        self.r = r
        self.gram_cache = []
        for A in self.blocks:
            G = A.T @ A
            self.gram_cache.append(0.5 * (G + G.T))
        self.rows = sum(A.shape[0] for A in self.blocks)
        self.alpha_scale = float(alpha_scale) if alpha_scale is not None else self.rows / self.n
        self._reference = None if reference is None else np.asarray(reference, dtype=float)

    @classmethod
    def from_data_matrix(cls, A, n, r, reference=None, alpha_scale=None):
        """Splits the rows of A into n contiguous equal blocks."""
        A = np.asarray(A, dtype=float)
        if A.shape[0] % n != 0:
            raise ParameterError(f"{A.shape[0]} rows cannot be split evenly over {n} agents")
        return cls(np.split(A, n), r, reference=reference, alpha_scale=alpha_scale)

    def local_value(self, agent, X):
        return -0.5 * float(np.sum(X * (self.gram_cache[agent] @ X)))

    def local_gradient(self, agent, X):
        return -(self.gram_cache[agent] @ X)

    @property
    def reference(self):
        if self._reference is None:
            pooled = sum(self.gram_cache)
            _, vecs = scipy.linalg.eigh(pooled, subset_by_index=[self.d - self.r, self.d - 1])
            self._reference = vecs[:, ::-1].copy()
            logging.info(f"Computed PCA reference by eigensolve of the pooled {self.d} x {self.d} Gram matrix")
        return self._reference


def pca_local_gradient(p, agent, X):
    """grad f_i(X) = -A_i^T A_i X for agent `agent` of a PcaProblem."""
    p._check_agent(agent)
    return p.local_gradient(agent, X)


def generate_synthetic_pca(n=8, m_per_agent=1000, d=10, r=5, xi=0.8, seed=0, scale=1.0):
    """
    Synthetic PCA instance with a geometric spectrum.

    A Gaussian matrix B (n * m_per_agent x d) is factored as U S V^T and rebuilt as
    A = U diag(scale * xi^j) V^T; the rows of A are split uniformly over the agents.

    Args:
        n (int): Agents.
        m_per_agent (int): Rows per agent.
        d (int): Ambient dimension.
        r (int): Number of components.
        xi (float): Spectrum ratio in (0, 1).
        seed (int): Generator seed.
        scale (float): Multiplier of the whole spectrum; 1.0 gives singular values xi^j.

    Returns:
        PcaProblem: Instance whose reference is the first r right singular vectors.
    """
    if n < 1 or d < 1 or not (1 <= r <= d):
        raise ParameterError(f"Invalid PCA dimensions n={n}, d={d}, r={r}")
    if m_per_agent * n < d:
        raise ParameterError(f"Need at least d={d} rows in total, got {m_per_agent * n}")
    if not (0.0 < xi < 1.0):
        raise ParameterError(f"xi must lie in (0, 1), got {xi}")
    if not scale > 0.0:
        raise ParameterError(f"scale must be positive, got {scale}")

    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n * m_per_agent, d))
    U, _, Vt = scipy.linalg.svd(B, full_matrices=False)
    spectrum = scale * xi ** np.arange(1, d + 1)
    A = (U * spectrum) @ Vt
    logging.info(f"Generated synthetic PCA instance: n={n}, m={m_per_agent}, d={d}, r={r}, xi={xi}, scale={scale}")
    return PcaProblem(np.split(A, n), r, reference=Vt[:r].T.copy())


def load_mnist_pca(images_path, n=8, r=2, seed=0):
    """
    PCA over IDX images scaled to [0, 1] and randomly partitioned into equal agent blocks.

    Args:
        images_path (str): IDX image file.
        n (int): Agents; must divide the image count.
        r (int): Number of components.
        seed (int): Seed of the row permutation.

    Returns:
        PcaProblem: Instance with alpha_scale equal to the image count.
    """
    images = read_idx_images(images_path)
    count = images.shape[0]
    if count % n != 0:
        raise ParameterError(f"{count} images cannot be split evenly over {n} agents")
    rows = images.reshape(count, -1).astype(float) / 255.0
    rng = np.random.default_rng(seed)
    rows = rows[rng.permutation(count)]
    logging.info(f"Partitioned {count} images into {n} blocks of {count // n} x {rows.shape[1]}")
    return PcaProblem(np.split(rows, n), r, alpha_scale=float(count))


class LrmcProblem(Problem):
    """
    Decentralized low-rank matrix completion over column blocks.

    f_i(X) = 1/2 || P_i * (X V_i(X) - A_i) ||_F^2 where V_i(X) is the masked least-squares factor.

    Args:
        blocks (list): Per-agent d x T_i data blocks.
        masks (list): Boolean observation masks of the same shapes.
        r (int): Rank.
        ridge (float): Ridge added to every per-column normal-equation matrix.
        reference (ndarray): Planted subspace, if known.
        alpha_scale (float): Step-size denominator; defaults to 1 / n.
    """

    def __init__(self, blocks, masks, r, ridge=LRMC_RIDGE, reference=None, alpha_scale=None):
        if not blocks or len(blocks) != len(masks):
            raise ParameterError("LrmcProblem needs one mask per non-empty list of blocks")
        if ridge < 0.0:
            raise ParameterError(f"ridge must be nonnegative, got {ridge}")
        self.masks = [np.asarray(M, dtype=bool) for M in masks]
        self.blocks = [np.where(M, np.asarray(A, dtype=float), 0.0) for A, M in zip(blocks, self.masks)]
        self.n = len(self.blocks)
        self.d = self.blocks[0].shape[0]
        for A, M in zip(self.blocks, self.masks):
            if A.shape != M.shape or A.shape[0] != self.d:
                raise DimensionError("Every LRMC block and mask must be d x T_i with matching shapes")
        if not (1 <= r <= self.d):
            raise ParameterError(f"Need 1 <= r <= d, got r={r}, d={self.d}")
        self.r = r
        self.T = sum(A.shape[1] for A in self.blocks)
        self.ridge = float(ridge)
        self.alpha_scale = float(alpha_scale) if alpha_scale is not None else 1.0 / self.n
        self._reference = None if reference is None else np.asarray(reference, dtype=float)

    @property
    def reference(self):
        return self._reference

    def local_factor(self, agent, X):
        mask = self.masks[agent]
        weights = mask.astype(float)
        # Per-column normal equations (X_w^T X_w + ridge I) v_t = X_w^T a_w
        lhs = np.einsum("dt,dr,ds->trs", weights, X, X)
        rhs = (X.T @ self.blocks[agent]).T
        if self.ridge > 0.0:
            lhs = lhs + self.ridge * np.eye(self.r)
            V = np.linalg.solve(lhs, rhs[..., None])[..., 0]
        else:
            V = np.einsum("trs,ts->tr", np.linalg.pinv(lhs), rhs)
        V[~mask.any(axis=0)] = 0.0
        return V.T

    def _residual(self, agent, X):
        V = self.local_factor(agent, X)
        R = np.where(self.masks[agent], X @ V - self.blocks[agent], 0.0)
        return R, V

    def local_value(self, agent, X):
        R, _ = self._residual(agent, X)
        return 0.5 * float(np.sum(R * R))

    def local_gradient(self, agent, X):
        R, V = self._residual(agent, X)
        return R @ V.T


def lrmc_local_factor(p, agent, X):
    """Least-squares factor V_i(X) (r x T_i); unobserved columns are zero."""
    p._check_agent(agent)
    return p.local_factor(agent, np.asarray(X, dtype=float))


def lrmc_local_gradient(p, agent, X):
    """Envelope gradient (P_i * (X V_i(X) - A_i)) V_i(X)^T with V_i solved afresh."""
    p._check_agent(agent)
    return p.local_gradient(agent, np.asarray(X, dtype=float))


def lrmc_mask_rate(d, T, r):
    """Observation rate mu = r (d + T - r) / (d T)."""
    return r * (d + T - r) / (d * T)


def generate_lrmc(n=8, d=100, r=5, T=1000, noise=1e-3, seed=0, ridge=LRMC_RIDGE, mask_rate=None):
    """
    Low-rank completion instance A = L R + noise * E with a Bernoulli observation mask.

    Args:
        n (int): Agents; must divide T.
        d (int): Rows.
        r (int): Planted rank.
        T (int): Columns.
        noise (float): Perturbation level.
        seed (int): Generator seed.
        ridge (float): Ridge of the inner least-squares solves.
        mask_rate (float): Observation probability; defaults to lrmc_mask_rate(d, T, r).

    Returns:
        LrmcProblem: Instance with contiguous column blocks and reference polar(L).
    """
    if n < 1 or r < 1 or r > min(d, T):
        raise ParameterError(f"Invalid LRMC dimensions n={n}, d={d}, r={r}, T={T}")
    if T % n != 0:
        raise ParameterError(f"T={T} columns cannot be split evenly over {n} agents")
    if noise < 0.0:
        raise ParameterError(f"noise must be nonnegative, got {noise}")
    mu = lrmc_mask_rate(d, T, r) if mask_rate is None else mask_rate
    if not (0.0 < mu <= 1.0):
        raise ParameterError(f"Observation rate must lie in (0, 1], got {mu}")

    rng = np.random.default_rng(seed)
    L = rng.standard_normal((d, r))
    R = rng.standard_normal((r, T))
    E = rng.standard_normal((d, T))
    A = L @ R + noise * E
    mask = rng.random((d, T)) < mu
    logging.info(f"Generated LRMC instance: n={n}, d={d}, r={r}, T={T}, mu={mu:.5f}, observed={mask.mean():.5f}")
    return LrmcProblem(np.split(A, n, axis=1), np.split(mask, n, axis=1), r, ridge=ridge,
                       reference=polar_orthonormalize(L))
