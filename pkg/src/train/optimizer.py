"""
Optimizer Module
================
Adam / AdamW update on SaeParams and the mutable training state.

For ReLU-L1 SAEs the decoder is kept on the unit sphere: the gradient
component parallel to each decoder column is removed before the update and
the columns are renormalized after it.

Usage:
    from src.train.optimizer import new_train_state, adam_step

    state = new_train_state(params, RngStream(seed=0, stream=PARTITION_STREAM))
    params, state = adam_step(state, params, grads, lr=2e-4)
"""

from dataclasses import dataclass, replace

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import normalize_columns
from src.numerics.rng import RngStream
from src.sae.model import SaeParams
from src.utils.errors import ShapeError, TrainingAbortedError


@dataclass
class TrainState:
    """
    Everything besides the parameters that a training run mutates.

    Attributes:
        adam_m: First-moment accumulators (SaeParams shaped)
        adam_v: Second-moment accumulators (SaeParams shaped)
        step: Number of completed optimizer steps
        last_fired: Per-latent index of the last step the latent fired
        rng: Partition stream (position = step)
    """

    adam_m: SaeParams
    adam_v: SaeParams
    step: int
    last_fired: np.ndarray
    rng: RngStream


def new_train_state(params: SaeParams, rng: RngStream) -> TrainState:
    """Zero moments, step 0, every latent treated as having fired at step 0."""
    return TrainState(
        adam_m=params.zeros_like(),
        adam_v=params.zeros_like(),
        step=0,
        last_fired=np.zeros(params.m, dtype=np.int64),
        rng=rng,
    )


def project_out_parallel(w_dec: np.ndarray, g_dec: np.ndarray) -> np.ndarray:
    """Remove from each gradient column its component along the (unit) decoder column."""
    unit = normalize_columns(w_dec)
    parallel = np.sum(unit * g_dec, axis=0)
    return g_dec - unit * parallel


def adam_step(
    state: TrainState,
    params: SaeParams,
    grads: SaeParams,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    unit_norm_decoder: bool = False,
):
    """
    One Adam update with bias correction (AdamW when weight_decay > 0).

    Args:
        state: Training state (moments and step counter)
        params: Current parameters
        grads: Gradients with the same shapes
        lr: Learning rate
        beta1, beta2, eps: Adam constants
        weight_decay: Decoupled weight decay
        unit_norm_decoder: Keep decoder columns unit-norm (ReLU-L1 mode)

    Returns:
        (new params, new state); the inputs are not modified

    Raises:
        TrainingAbortedError: If any gradient is non-finite
        ShapeError: If gradient shapes disagree with the parameters
    """
    for name, value in params.items():
        if getattr(grads, name).shape != value.shape:
            raise ShapeError(f"gradient {name} has shape {getattr(grads, name).shape}, expected {value.shape}")
    if not grads.is_finite():
        bad = [name for name, g in grads.items() if not np.isfinite(g).all()]
        raise TrainingAbortedError(f"non-finite gradient in {', '.join(bad)} at step {state.step}")

    if unit_norm_decoder:
        grads = replace(grads, w_dec=project_out_parallel(params.w_dec, grads.w_dec))

    t = state.step + 1
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t

    new_values, new_m, new_v = {}, {}, {}
    for name, value in params.items():
        g = getattr(grads, name)
        m = beta1 * getattr(state.adam_m, name) + (1.0 - beta1) * g
        v = beta2 * getattr(state.adam_v, name) + (1.0 - beta2) * (g * g)
        update = (m / bias1) / (np.sqrt(v / bias2) + eps)
        new_values[name] = value - lr * update - lr * weight_decay * value
        new_m[name] = m
        new_v[name] = v

    new_params = SaeParams(**new_values)
    if unit_norm_decoder:
        new_params.w_dec = normalize_columns(new_params.w_dec)

    new_state = replace(
        state,
        adam_m=SaeParams(**new_m),
        adam_v=SaeParams(**new_v),
        step=t,
    )
    return new_params, new_state
