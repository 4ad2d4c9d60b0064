# src/simulate_data.py
# Writers for generated instances: synthetic PCA and LRMC data as .npz archives, graph edge lists
# and small IDX image files that stand in for the MNIST training set.

import logging
import os

import numpy as np

from src.errors import OutputError
from src.ingest import write_idx_images
from src.network import build_topology, write_graph_file
from src.problems import generate_lrmc, generate_synthetic_pca


def _ensure_parent(path):
    output_dir = os.path.dirname(str(path))
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)
        logging.info(f"Created output directory: {output_dir}")


def _save_npz(path, **arrays):
    try:
        _ensure_parent(path)
        np.savez_compressed(path, **arrays)
    except OSError as e:
        logging.error(f"Error writing {path}: {e}")
        raise OutputError(f"Could not write {path}: {e}", path) from e


def simulate_pca_archive(output_path, **generator_args):
    """
    Generates a synthetic PCA instance and stores it as an .npz archive.

    Args:
        output_path (str): Destination archive.
        **generator_args: Forwarded to generate_synthetic_pca.

    Returns:
        PcaProblem: The generated instance.
    """
    problem = generate_synthetic_pca(**generator_args)
    _save_npz(output_path, blocks=np.stack(problem.blocks), reference=problem.reference)
    logging.info(f"Synthetic PCA instance saved to {output_path}")
    return problem


def simulate_lrmc_archive(output_path, **generator_args):
    """Generates an LRMC instance and stores its blocks, masks and reference."""
    problem = generate_lrmc(**generator_args)
    _save_npz(output_path, blocks=np.stack(problem.blocks), masks=np.stack(problem.masks),
              reference=problem.reference)
    logging.info(f"LRMC instance saved to {output_path}")
    return problem


def simulate_graph_file(output_path, kind, n, p=None, seed=None):
    """Samples a topology and writes it as an edge list."""
    topology = build_topology(kind, n, p=p, seed=seed)
    try:
        _ensure_parent(output_path)
        write_graph_file(topology, output_path)
    except OSError as e:
        logging.error(f"Error writing graph file {output_path}: {e}")
        raise OutputError(f"Could not write graph file {output_path}: {e}", output_path) from e
    return topology


def simulate_idx_images(output_path, count=64, rows=8, cols=8, seed=0):
    """
    Writes `count` random grayscale images in IDX layout.

    Returns:
        ndarray: The uint8 pixels that were written.
    """
    rng = np.random.default_rng(seed)
    images = rng.integers(0, 256, size=(count, rows, cols), dtype=np.uint8)
    write_idx_images(images, output_path)
    return images
