"""
Geometry Metrics Module
=======================
Atomicity metrics computed from decoder directions alone.

This module provides:
- mean_cos_sim: average nearest-neighbor cosine (signed)
- clustering_coefficient: global clustering of the |cos| > t feature graph
- unique_features: fraction of features with no |cos| >= t partner in another model
- ground_truth_mmcs: recovery of known features on synthetic data
- nearest_cosine_table: per-feature nearest-neighbor cosines for density plots

Usage:
    from src.metrics.geometry import mean_cos_sim, clustering_coefficient

    mcs = mean_cos_sim(params.w_dec)
    curve = clustering_coefficient(params.w_dec, DEFAULT_THRESHOLDS)
"""

from typing import List, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.datagen.synthetic_world import SyntheticWorld
from src.numerics.kernels import as_dense
from src.sae.model import DEFAULT_DELTA
from src.sae.ortho import cosine_matrix, nearest_neighbor_cos
from src.utils.errors import ConfigurationError, ShapeError


# =============================================================================
# Constants
# =============================================================================
DEFAULT_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 11))   # 0.05 … 0.50
UNIQUE_THRESHOLD = 0.2


def mean_cos_sim(w_dec, delta: float = DEFAULT_DELTA) -> float:
    """
    (1/m) Σ_i max_{j≠i} cos(w_i, w_j)

    Raises:
        ConfigurationError: If m < 2
    """
    w_dec = as_dense(w_dec, "w_dec")
    if w_dec.shape[1] < 2:
        raise ConfigurationError(f"need at least 2 latents, got {w_dec.shape[1]}", key="dict_size")
    return float(np.mean(nearest_neighbor_cos(w_dec, delta)))


def nearest_cosine_table(w_dec, delta: float = DEFAULT_DELTA) -> pd.DataFrame:
    """feature_id,max_cos for every decoder column."""
    w_dec = as_dense(w_dec, "w_dec")
    return pd.DataFrame({
        "feature_id": np.arange(w_dec.shape[1]),
        "max_cos": nearest_neighbor_cos(w_dec, delta),
    })


def similarity_graph(w_dec, threshold: float, delta: float = DEFAULT_DELTA) -> nx.Graph:
    """Graph on the decoder columns with an edge wherever |cos| > threshold."""
    w_dec = as_dense(w_dec, "w_dec")
    m = w_dec.shape[1]
    cos = np.abs(cosine_matrix(w_dec, w_dec, delta))
    rows, cols = np.nonzero(np.triu(cos > threshold, k=1))

    graph = nx.Graph()
    graph.add_nodes_from(range(m))
    graph.add_edges_from(zip(rows.tolist(), cols.tolist()))
    return graph


def clustering_coefficient(
    w_dec,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    delta: float = DEFAULT_DELTA,
) -> List[Tuple[float, float]]:
    """
    Edge density and global clustering coefficient per threshold.

    density = 2E / (m(m−1)); coefficient = 3·triangles / connected triples,
    0 when the graph has no connected triple.

    Args:
        w_dec: n × m decoder (m >= 3)
        thresholds: |cos| thresholds to evaluate
        delta: Cosine clamp

    Returns:
        List of (density, coefficient), one per threshold
    """
    w_dec = as_dense(w_dec, "w_dec")
    if w_dec.shape[1] < 3:
        raise ConfigurationError(f"need at least 3 latents, got {w_dec.shape[1]}", key="dict_size")

    curve = []
    for threshold in thresholds:
        graph = similarity_graph(w_dec, threshold, delta)
        curve.append((float(nx.density(graph)), float(nx.transitivity(graph))))
    return curve


def unique_features(w_a, w_b, threshold: float = UNIQUE_THRESHOLD, delta: float = DEFAULT_DELTA) -> float:
    """
    Fraction of columns of w_a whose |cos| to every column of w_b is below threshold.
    """
    w_a = as_dense(w_a, "w_a")
    w_b = as_dense(w_b, "w_b")
    if w_a.shape[0] != w_b.shape[0]:
        raise ShapeError(f"dictionaries live in different spaces: {w_a.shape[0]} vs {w_b.shape[0]}")
    best = np.abs(cosine_matrix(w_a, w_b, delta)).max(axis=1)
    return float(np.mean(best < threshold))


def ground_truth_mmcs(world: SyntheticWorld, w_dec, delta: float = DEFAULT_DELTA) -> float:
    """
    Mean over ground-truth features of the best cosine to any decoder column.
    """
    w_dec = as_dense(w_dec, "w_dec")
    if world.dim_n != w_dec.shape[0]:
        raise ShapeError(f"world has dimension {world.dim_n}, decoder {w_dec.shape[0]}")
    return float(np.mean(cosine_matrix(world.features, w_dec, delta).max(axis=1)))
