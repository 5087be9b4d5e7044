"""
Orthogonality Module
====================
Cosine similarity with a δ-clamped denominator and the chunk-wise
orthogonality penalty on decoder columns.

For a random partition of the m latents into K equal chunks C_1..C_K:

    penalty = 1/K · Σ_k 1/|C_k| · Σ_{i∈C_k} ( max_{j∈C_k, j≠i} cos(w_i, w_j) )²

With K = 1 this is the exact O(m²) penalty; larger K trades exactness for
O(m) cost. Chunks are stored sorted so a single chunk always visits latents
in index order, which makes the K = 1 value bit-identical to the full one.

Usage:
    from src.sae.ortho import ortho_penalty_chunked, ortho_penalty_full

    value, partition = ortho_penalty_chunked(w_dec, 4, 1e-8, rng.at(step))
"""

from typing import Sequence, Tuple

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import as_dense, as_vector
from src.numerics.rng import RngStream
from src.utils.errors import ConfigurationError, ConsistencyError, ShapeError


Partition = Tuple[np.ndarray, ...]


def cosine_sim(u, v, delta: float) -> float:
    """
    Cosine similarity ⟨u,v⟩ / max(‖u‖·‖v‖, δ).

    Example:
        >>> cosine_sim([1, 0], [0, 1], 1e-8)
        0.0
    """
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"vectors differ in length: {u.size} vs {v.size}")
    denom = max(float(np.linalg.norm(u) * np.linalg.norm(v)), delta)
    return float(np.dot(u, v) / denom)


def cosine_matrix(a: np.ndarray, b: np.ndarray, delta: float) -> np.ndarray:
    """
    Pairwise cosine similarities between the columns of a and of b.

    Entry (i, j) is cosine_sim(a[:, i], b[:, j], delta).
    """
    a = as_dense(a, "a")
    b = as_dense(b, "b")
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"column dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    outer = np.outer(np.linalg.norm(a, axis=0), np.linalg.norm(b, axis=0))
    return (a.T @ b) / np.maximum(outer, delta)


def nearest_neighbor_cos(w: np.ndarray, delta: float) -> np.ndarray:
    """For every column, the largest cosine to any other column (ties: lowest index)."""
    cos = cosine_matrix(w, w, delta)
    np.fill_diagonal(cos, -np.inf)
    return cos.max(axis=1)


def random_partition(m: int, chunk_count: int, rng: RngStream) -> Partition:
    """
    Shuffle latent indices and split them into chunk_count equal chunks.

    Args:
        m: Number of latents
        chunk_count: Number of chunks (must divide m, chunks of size >= 2)
        rng: Stream positioned for this draw

    Returns:
        Tuple of sorted index arrays
    """
    if chunk_count < 1 or m % chunk_count != 0:
        raise ConfigurationError(f"{m} latents cannot be split into {chunk_count} equal chunks", key="chunk_count")
    size = m // chunk_count
    if size < 2:
        raise ConfigurationError(f"chunk size {size} is below 2", key="chunk_count")
    perm = rng.generator().permutation(m)
    return tuple(np.sort(perm[k * size:(k + 1) * size]) for k in range(chunk_count))


def _chunk_geometry(w_dec: np.ndarray, idx: np.ndarray, delta: float):
    """Cosines inside one chunk plus everything the gradient needs."""
    cols = w_dec[:, idx]
    norms = np.linalg.norm(cols, axis=0)
    outer = np.outer(norms, norms)
    clamped = outer <= delta
    denom = np.where(clamped, delta, outer)
    cos = (cols.T @ cols) / denom

    masked = cos.copy()
    np.fill_diagonal(masked, -np.inf)
    nearest = masked.argmax(axis=1)
    return cols, norms, denom, clamped, cos, nearest


def _penalty_from_partition(w_dec: np.ndarray, partition: Partition, delta: float) -> float:
    chunk_means = []
    for idx in partition:
        _, _, _, _, cos, nearest = _chunk_geometry(w_dec, idx, delta)
        best = cos[np.arange(idx.size), nearest]
        chunk_means.append(np.mean(best * best))
    return float(np.mean(chunk_means))


def ortho_penalty_chunked(
    w_dec: np.ndarray,
    chunk_count: int,
    delta: float,
    rng: RngStream,
) -> Tuple[float, Partition]:
    """
    Chunk-wise orthogonality penalty on the decoder columns.

    Args:
        w_dec: n × m decoder
        chunk_count: Number of random chunks K
        delta: Cosine denominator clamp
        rng: Stream positioned for this step's partition

    Returns:
        (penalty value, partition used); backward replays the partition

    Raises:
        ConfigurationError: If m is not divisible by K or a chunk has < 2 members
    """
    w_dec = as_dense(w_dec, "w_dec")
    partition = random_partition(w_dec.shape[1], chunk_count, rng)
    return _penalty_from_partition(w_dec, partition, delta), partition


def ortho_penalty_full(w_dec: np.ndarray, delta: float) -> float:
    """
    Exact orthogonality penalty (a single chunk holding every latent).

    Raises:
        ConfigurationError: If m < 2
    """
    w_dec = as_dense(w_dec, "w_dec")
    m = w_dec.shape[1]
    if m < 2:
        raise ConfigurationError(f"need at least 2 latents, got {m}", key="dict_size")
    return _penalty_from_partition(w_dec, (np.arange(m),), delta)


def check_partition(partition: Sequence[np.ndarray], m: int) -> None:
    """Raise ConsistencyError unless partition covers 0..m-1 exactly once."""
    covered = np.sort(np.concatenate([np.asarray(c) for c in partition])) if partition else np.array([])
    if covered.size != m or not np.array_equal(covered, np.arange(m)):
        raise ConsistencyError(
            f"partition covers {covered.size} indices but the decoder has {m} latents"
        )


def ortho_penalty_grad(w_dec: np.ndarray, partition: Partition, delta: float) -> np.ndarray:
    """
    Gradient of the chunked penalty with respect to the decoder.

    The max is differentiated through its argmax (ties to the lowest index).
    Where ‖u‖·‖v‖ <= δ the denominator is the constant δ.

    Returns:
        n × m gradient
    """
    return ortho_penalty_and_grad(w_dec, partition, delta)[1]


def ortho_penalty_and_grad(w_dec: np.ndarray, partition: Partition, delta: float) -> Tuple[float, np.ndarray]:
    """
    Penalty value and decoder gradient for a given partition in one pass.

    The value is bit-identical to ortho_penalty_chunked on the same partition.

    Returns:
        (penalty value, n × m gradient)
    """
    w_dec = as_dense(w_dec, "w_dec")
    n, m = w_dec.shape
    check_partition(partition, m)
    grad = np.zeros((n, m))
    chunk_count = len(partition)
    chunk_means = []

    for idx in partition:
        size = idx.size
        cols, norms, denom, clamped, cos, nearest = _chunk_geometry(w_dec, idx, delta)
        rows = np.arange(size)
        best = cos[rows, nearest]
        chunk_means.append(np.mean(best * best))
        scale = 2.0 * best / (chunk_count * size)

        den = denom[rows, nearest]
        free = ~clamped[rows, nearest]
        safe_sq = np.where(norms > 0, norms * norms, 1.0)
        other = cols[:, nearest]

        # d cos / d u  and  d cos / d v for each (i, nearest[i]) pair
        d_self = other / den - np.where(free, best / safe_sq, 0.0) * cols
        d_other = cols / den - np.where(free, best / safe_sq[nearest], 0.0) * other

        chunk_grad = d_self * scale
        np.add.at(chunk_grad.T, nearest, (d_other * scale).T)
        grad[:, idx] += chunk_grad

    return float(np.mean(chunk_means)), grad
