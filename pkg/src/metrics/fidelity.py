"""
Fidelity Metrics Module
=======================
Reconstruction fidelity: explained variance and the KL-divergence score.

Usage:
    from src.metrics.fidelity import explained_variance, kl_divergence_score

    ev = explained_variance(x, trace.recon)
    score = kl_divergence_score(p_orig, p_sae, p_ablated)
"""

import numpy as np
from scipy.special import rel_entr
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import as_dense, row_variance_total
from src.utils.errors import ShapeError, UndefinedInputError, UndefinedBaselineError


PROBABILITY_TOLERANCE = 1e-9


def explained_variance(x, x_hat) -> float:
    """
    Fraction of variance explained by a reconstruction.

        EV = 1 − totalVar(x − x̂) / totalVar(x)

    Args:
        x: Original rows (at least 2)
        x_hat: Reconstruction, same shape

    Returns:
        Explained variance (at most 1)

    Raises:
        ShapeError: If shapes differ
        UndefinedInputError: If x has zero total variance
    """
    x = as_dense(x, "x")
    x_hat = as_dense(x_hat, "x_hat")
    if x.shape != x_hat.shape:
        raise ShapeError(f"x has shape {x.shape}, reconstruction {x_hat.shape}")
    total = row_variance_total(x)
    if total == 0:
        raise UndefinedInputError("explained variance is undefined for constant input")
    return 1.0 - row_variance_total(x - x_hat) / total


def _probability_vector(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError(f"{name} must be a 1-D probability vector")
    if (p < 0).any() or abs(p.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise ValueError(f"{name} is not a probability vector (sum {p.sum()})")
    return p


def kl_divergence(p, q) -> float:
    """D_KL(p ‖ q) in nats."""
    return float(np.sum(rel_entr(p, q)))


def kl_divergence_score(p_orig, p_sae, p_ablated) -> float:
    """
    Relative KL improvement of the SAE over zero-ablation.

        score = (D_KL(p_abl‖p_orig) − D_KL(p_sae‖p_orig)) / D_KL(p_abl‖p_orig)

    1 means perfect reconstruction, 0 means no better than ablating.

    Raises:
        UndefinedBaselineError: If D_KL(p_abl‖p_orig) is zero or infinite
    """
    p_orig = _probability_vector(p_orig, "p_orig")
    p_sae = _probability_vector(p_sae, "p_sae")
    p_ablated = _probability_vector(p_ablated, "p_ablated")
    if not p_orig.shape == p_sae.shape == p_ablated.shape:
        raise ShapeError("probability vectors differ in length")

    baseline = kl_divergence(p_ablated, p_orig)
    if baseline <= 0:
        raise UndefinedBaselineError("ablated distribution equals the original; score is undefined")
    if not np.isfinite(baseline):
        raise UndefinedBaselineError("p_orig has zero mass where p_ablated does not; score is undefined")
    return (baseline - kl_divergence(p_sae, p_orig)) / baseline
