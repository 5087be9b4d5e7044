"""
Auxiliary Loss Module
=====================
Dead-latent recycling term.

A latent is dead when it has not fired for more than dead_window steps. The
auxiliary term asks the top aux_k dead latents (ranked per row by
pre-activation, positive ones only) to reconstruct the residual x − x̂:

    aux = mean_b ‖ (x − x̂)_b − (z_aux · W_decᵀ)_b ‖²
"""

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import row_topk_mask
from src.sae.model import SaeConfig, SaeParams, ForwardTrace


def dead_latent_mask(last_fired: np.ndarray, step: int, dead_window: int) -> np.ndarray:
    """Latents whose last firing is more than dead_window steps before step."""
    return (step - np.asarray(last_fired)) > dead_window


def aux_support(preacts: np.ndarray, dead_mask: np.ndarray, aux_k: int) -> np.ndarray:
    """
    B × m mask of the dead latents used by the auxiliary reconstruction.

    Per row: the aux_k largest positive pre-activations among dead latents.
    """
    dead_mask = np.asarray(dead_mask, dtype=bool)
    if aux_k == 0 or not dead_mask.any():
        return np.zeros(preacts.shape, dtype=bool)
    candidates = np.where(dead_mask, preacts, -np.inf)
    return row_topk_mask(candidates, aux_k) & dead_mask & (preacts > 0)


def aux_latents(trace: ForwardTrace, dead_mask: np.ndarray, aux_k: int):
    """Auxiliary code z_aux and its support."""
    mask = aux_support(trace.preacts, dead_mask, aux_k)
    return np.where(mask, trace.preacts, 0.0), mask


def aux_loss(
    params: SaeParams,
    cfg: SaeConfig,
    x: np.ndarray,
    trace: ForwardTrace,
    dead_mask: np.ndarray,
) -> float:
    """
    Mean squared error of reconstructing the residual with dead latents.

    Args:
        params: SAE parameters
        cfg: SAE configuration (aux_k)
        x: B × n batch
        trace: Forward trace of x (recon filled in)
        dead_mask: Length-m boolean dead-latent mask

    Returns:
        Auxiliary loss, 0 when no latent is dead
    """
    dead_mask = np.asarray(dead_mask, dtype=bool)
    if not dead_mask.any():
        return 0.0
    z_aux, _ = aux_latents(trace, dead_mask, cfg.aux_k)
    residual = x - trace.recon
    diff = residual - z_aux @ params.w_dec.T
    return float(np.sum(diff * diff) / x.shape[0])
