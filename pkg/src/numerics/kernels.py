"""
Kernels Module
==============
Dense linear-algebra and selection kernels every other stage is built on.

A DenseMatrix is simply a 2-D, C-contiguous float64 numpy array. All
training math runs in 64-bit; files store 32-bit and are widened on load.

Usage:
    from src.numerics.kernels import as_dense, matmul, topk_indices

    x = as_dense([[1, 2], [3, 4]])
    y = matmul(x, x)
"""

import numpy as np
from typing import Any
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.utils.errors import ShapeError, InsufficientDataError


def as_dense(values: Any, name: str = "matrix") -> np.ndarray:
    """
    Convert input to a DenseMatrix (2-D contiguous float64 array).

    Args:
        values: Anything numpy can turn into a 2-D array
        name: Name used in the error message

    Returns:
        2-D float64 array

    Raises:
        ShapeError: If the input is not two-dimensional
    """
    matrix = np.ascontiguousarray(values, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got {matrix.ndim}-D with shape {matrix.shape}")
    return matrix


def as_vector(values: Any, name: str = "vector") -> np.ndarray:
    """Convert input to a 1-D float64 array, raising ShapeError otherwise."""
    vector = np.ascontiguousarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {vector.shape}")
    return vector


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """
    Standard matrix product of two DenseMatrix operands.

    Args:
        a: Left operand (r × k)
        b: Right operand (k × c)

    Returns:
        r × c product

    Raises:
        ShapeError: If a.cols != b.rows

    Example:
        >>> matmul(np.eye(2), [[1, 2], [3, 4]])
        array([[1., 2.],
               [3., 4.]])
    """
    a = as_dense(a, "left operand")
    b = as_dense(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def topk_indices(values: Any, k: int) -> np.ndarray:
    """
    Indices of the k largest values, largest first.

    Ties are broken by lowest index, so the result is deterministic. When k
    exceeds the number of values every index is returned.

    Args:
        values: 1-D sequence of reals
        k: How many indices to keep (k >= 0)

    Returns:
        int64 array of min(k, len(values)) indices

    Example:
        >>> topk_indices([0.5, 2.0, 0.5], 2)
        array([1, 0])
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    values = np.asarray(values, dtype=np.float64).ravel()
    # stable sort on the negated values keeps equal values in index order
    order = np.argsort(-values, kind="stable")
    return order[: min(k, values.size)].astype(np.int64)


def row_topk_mask(values: np.ndarray, k: int) -> np.ndarray:
    """
    Boolean mask selecting the k largest entries of each row.

    Same tie rule as topk_indices (lowest column index wins).
    """
    values = np.asarray(values, dtype=np.float64)
    rows, cols = values.shape
    mask = np.zeros((rows, cols), dtype=bool)
    keep = min(k, cols)
    if keep == 0:
        return mask
    order = np.argsort(-values, axis=1, kind="stable")[:, :keep]
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def row_variance_total(x: Any) -> float:
    """
    Sum over columns of the per-column variance (divisor rows).

    Args:
        x: DenseMatrix with at least two rows

    Returns:
        Total variance of the rows

    Raises:
        InsufficientDataError: If x has fewer than two rows

    Example:
        >>> row_variance_total([[0.0], [2.0]])
        1.0
    """
    x = as_dense(x)
    if x.shape[0] < 2:
        raise InsufficientDataError(f"variance needs at least 2 rows, got {x.shape[0]}")
    return float(np.var(x, axis=0).sum())


def column_norms(w: np.ndarray) -> np.ndarray:
    """Euclidean norm of each column."""
    return np.linalg.norm(w, axis=0)


def normalize_columns(w: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Return a copy of w with every column scaled to unit norm (zero columns stay zero)."""
    w = as_dense(w)
    norms = column_norms(w)
    return w / np.where(norms > eps, norms, 1.0)
