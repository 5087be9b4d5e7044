"""
Decomposition Module
====================
Expresses features of one dictionary as sparse non-negative combinations of
another dictionary's features.

The search is non-negative orthogonal matching pursuit: pick the unit column
most correlated with the residual, refit all coefficients by non-negative
least squares (scipy nnls), repeat up to max_atoms. Atoms whose coefficient
falls below coef_min are dropped and the rest refit. A decomposition is
accepted only if the approximation's cosine to the target exceeds cos_accept
and every remaining coefficient is at least coef_min.

Coefficients refer to unit-normalized dictionary columns.

Usage:
    from src.metrics.decomposition import decompose_feature

    result = decompose_feature(w_batchtopk[:, 7], w_ortsae)
    if result is not None:
        print(result.indices, result.coefficients)
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.optimize import nnls
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_eval_logger
from src.numerics.kernels import as_dense, as_vector, normalize_columns
from src.sae.model import DEFAULT_DELTA
from src.sae.ortho import cosine_sim
from src.utils.errors import ShapeError


# =============================================================================
# Constants (acceptance thresholds)
# =============================================================================
MAX_ATOMS = 5
COS_ACCEPT = 0.95
COEF_MIN = 0.1


@dataclass
class Decomposition:
    """Accepted decomposition: atom indices, their coefficients and the fit cosine."""

    indices: List[int]
    coefficients: List[float]
    cosine: float


def _nonnegative_omp(target: np.ndarray, dictionary: np.ndarray, max_atoms: int):
    active: List[int] = []
    coef = np.zeros(0)
    residual = target.copy()
    for _ in range(max_atoms):
        corr = dictionary.T @ residual
        corr[active] = -np.inf
        best = int(np.argmax(corr))
        if not corr[best] > 0:
            break
        active.append(best)
        coef, _ = nnls(dictionary[:, active], target)
        residual = target - dictionary[:, active] @ coef
    return active, coef


def decompose_feature(
    target,
    w_dec,
    max_atoms: int = MAX_ATOMS,
    cos_accept: float = COS_ACCEPT,
    coef_min: float = COEF_MIN,
    delta: float = DEFAULT_DELTA,
) -> Optional[Decomposition]:
    """
    Sparse non-negative decomposition of one feature vector.

    Args:
        target: Length-n vector
        w_dec: n × m dictionary (columns are normalized internally)
        max_atoms: Maximum number of atoms
        cos_accept: Minimum cosine between target and approximation
        coef_min: Minimum coefficient of every kept atom

    Returns:
        Decomposition, or None when no acceptable decomposition exists
    """
    target = as_vector(target, "target")
    dictionary = normalize_columns(as_dense(w_dec, "w_dec"))
    if dictionary.shape[0] != target.size:
        raise ShapeError(f"target has length {target.size}, dictionary columns {dictionary.shape[0]}")

    active, coef = _nonnegative_omp(target, dictionary, max_atoms)

    # drop weak atoms and refit until every coefficient clears the bar
    while active:
        keep = [i for i, c in zip(active, coef) if c >= coef_min]
        if len(keep) == len(active):
            break
        active = keep
        if active:
            coef, _ = nnls(dictionary[:, active], target)

    if not active:
        return None

    approx = dictionary[:, active] @ coef
    cosine = cosine_sim(target, approx, delta)
    if cosine <= cos_accept:
        return None

    order = np.argsort(active, kind="stable")
    return Decomposition(
        indices=[int(active[i]) for i in order],
        coefficients=[float(coef[i]) for i in order],
        cosine=cosine,
    )


def decompose_dictionary(w_a, w_b, logger=None, **kwargs) -> pd.DataFrame:
    """
    Decompose every column of w_a (normalized) in the dictionary w_b.

    Returns:
        DataFrame with one row per accepted feature:
        feature_id, atoms ("3|17"), coefficients ("0.71|0.45"), cosine
    """
    if logger is None:
        logger = get_eval_logger()

    targets = normalize_columns(as_dense(w_a, "w_a"))
    rows = []
    for feature_id in range(targets.shape[1]):
        result = decompose_feature(targets[:, feature_id], w_b, **kwargs)
        if result is None:
            continue
        rows.append({
            "feature_id": feature_id,
            "num_atoms": len(result.indices),
            "atoms": "|".join(str(i) for i in result.indices),
            "coefficients": "|".join(f"{c:.6f}" for c in result.coefficients),
            "cosine": result.cosine,
        })

    logger.info(f"Decomposed {len(rows)} of {targets.shape[1]} features")
    return pd.DataFrame(rows, columns=["feature_id", "num_atoms", "atoms", "coefficients", "cosine"])
