"""
Objective Module
================
Loss terms of the OrtSAE objective and their analytic gradients.

    total = mse + λ·sparsity + α·aux + γ_eff·ortho

- mse:      mean over the batch of ‖x − x̂‖²
- sparsity: mean L1 of the latents (ReLU-L1 mode only)
- aux:      dead-latent residual reconstruction (see src/train/auxiliary.py)
- ortho:    chunk-wise orthogonality penalty, only on steps where
            step % penalty_period == 0, with γ_eff = γ · penalty_period

Selection masks (ReLU, TopK, BatchTopK, aux support) are constants for the
gradient: it flows through the selected support only.

Usage:
    from src.sae.objective import loss, backward

    trace = forward(params, cfg, x)
    parts = loss(params, cfg, x, trace, step, rng, dead_mask, keep_ortho_grad=True)
    grads = backward(params, cfg, x, trace, parts.partition, dead_mask, ortho_grad=parts.ortho_grad)
"""

import time
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import as_dense
from src.numerics.rng import RngStream
from src.sae.model import Mode, SaeConfig, SaeParams, ForwardTrace
from src.sae.ortho import (
    ortho_penalty_and_grad, ortho_penalty_chunked, ortho_penalty_grad, check_partition, random_partition, Partition,
)
from src.train.auxiliary import aux_loss, aux_latents
from src.utils.errors import ConsistencyError, ShapeError


@dataclass
class LossBreakdown:
    """
    Loss components of one evaluation.

    Attributes:
        mse: Reconstruction error
        sparsity: Mean L1 of the latents (0 outside ReLU-L1)
        aux: Dead-latent auxiliary loss
        ortho: Orthogonality penalty (0 on steps where it is skipped)
        total: mse + λ·sparsity + α·aux + γ_eff·ortho
        gamma_effective: Coefficient applied to ortho at this step
        partition: Chunk partition used for ortho (None when skipped)
        ortho_grad: Decoder gradient of ortho, when loss was asked to keep it
    """

    mse: float
    sparsity: float
    aux: float
    ortho: float
    total: float
    gamma_effective: float = 0.0
    partition: Optional[Partition] = None
    ortho_grad: Optional[np.ndarray] = field(default=None, repr=False)


def _check_batch(params: SaeParams, x: np.ndarray, trace: ForwardTrace) -> np.ndarray:
    x = as_dense(x, "x")
    if x.shape[1] != params.n:
        raise ShapeError(f"input has {x.shape[1]} columns, SAE expects {params.n}")
    if trace.recon is None or trace.recon.shape != x.shape:
        raise ShapeError("trace does not hold a reconstruction of x")
    if trace.latents.shape != (x.shape[0], params.m):
        raise ShapeError(f"trace latents have shape {trace.latents.shape}, expected {(x.shape[0], params.m)}")
    return x


def loss(
    params: SaeParams,
    cfg: SaeConfig,
    x: np.ndarray,
    trace: ForwardTrace,
    step: int,
    rng: RngStream,
    dead_mask: Optional[np.ndarray] = None,
    timings: Optional[Dict[str, float]] = None,
    keep_ortho_grad: bool = False,
) -> LossBreakdown:
    """
    Evaluate every loss term for one batch.

    Args:
        params: SAE parameters
        cfg: SAE configuration
        x: B × n batch
        trace: forward(params, cfg, x)
        step: Training step (selects penalty steps and the partition)
        rng: Partition stream; position `step` is used
        dead_mask: Length-m dead-latent mask (None: no aux term)
        timings: Optional dict; seconds spent on the penalty go to "ortho"
        keep_ortho_grad: Also compute the penalty gradient from the same
            cosine matrices and store it on the result for backward

    Returns:
        LossBreakdown (carries the partition for backward)
    """
    x = _check_batch(params, x, trace)
    batch = x.shape[0]

    err = x - trace.recon
    mse = float(np.sum(err * err) / batch)

    sparsity = 0.0
    if cfg.mode is Mode.RELU_L1:
        sparsity = float(np.sum(np.abs(trace.latents)) / batch)

    aux = 0.0
    if cfg.alpha > 0 and dead_mask is not None:
        aux = aux_loss(params, cfg, x, trace, dead_mask)

    ortho = 0.0
    gamma_eff = 0.0
    partition = None
    ortho_grad = None
    if cfg.ortho_applies(step):
        started = time.perf_counter()
        if keep_ortho_grad:
            partition = random_partition(params.m, cfg.chunk_count, rng.at(step))
            ortho, ortho_grad = ortho_penalty_and_grad(params.w_dec, partition, cfg.delta)
        else:
            ortho, partition = ortho_penalty_chunked(params.w_dec, cfg.chunk_count, cfg.delta, rng.at(step))
        gamma_eff = cfg.gamma_effective
        if timings is not None:
            timings["ortho"] = timings.get("ortho", 0.0) + time.perf_counter() - started

    total = mse + cfg.lam * sparsity + cfg.alpha * aux + gamma_eff * ortho
    return LossBreakdown(
        mse=mse,
        sparsity=sparsity,
        aux=aux,
        ortho=ortho,
        total=total,
        gamma_effective=gamma_eff,
        partition=partition,
        ortho_grad=ortho_grad,
    )


def backward(
    params: SaeParams,
    cfg: SaeConfig,
    x: np.ndarray,
    trace: ForwardTrace,
    partition: Optional[Partition],
    dead_mask: Optional[np.ndarray] = None,
    gamma_effective: Optional[float] = None,
    timings: Optional[Dict[str, float]] = None,
    ortho_grad: Optional[np.ndarray] = None,
) -> SaeParams:
    """
    Exact gradients of the total loss with respect to all four parameter blocks.

    Args:
        params: SAE parameters
        cfg: SAE configuration
        x: B × n batch
        trace: Forward trace of x
        partition: Partition returned by loss (None: no ortho term)
        dead_mask: Same mask that was given to loss
        gamma_effective: Coefficient of the ortho term (default γ · period)
        timings: Optional dict; seconds spent on the penalty go to "ortho"
        ortho_grad: Penalty gradient kept by loss for this partition (default: recomputed)

    Returns:
        Gradients packed as SaeParams

    Raises:
        ConsistencyError: If the partition or ortho_grad does not match the decoder
    """
    x = _check_batch(params, x, trace)
    batch = x.shape[0]
    if partition is not None:
        check_partition(partition, params.m)

    # reconstruction
    g_recon = (2.0 / batch) * (trace.recon - x)
    g_w_dec = g_recon.T @ trace.latents
    g_b_dec = g_recon.sum(axis=0)
    g_latents = g_recon @ params.w_dec

    if cfg.mode is Mode.RELU_L1 and cfg.lam > 0:
        g_latents = g_latents + cfg.lam / batch
    g_pre = g_latents * trace.active_mask

    # aux: residual target depends on the parameters too, so
    # aux = mean ‖(z + z_aux)·W_decᵀ + b_dec − x‖²
    if cfg.alpha > 0 and dead_mask is not None and np.any(dead_mask):
        z_aux, aux_mask = aux_latents(trace, dead_mask, cfg.aux_k)
        g_aux = (2.0 * cfg.alpha / batch) * (trace.recon + z_aux @ params.w_dec.T - x)
        g_w_dec += g_aux.T @ (trace.latents + z_aux)
        g_b_dec += g_aux.sum(axis=0)
        g_aux_latents = g_aux @ params.w_dec
        g_pre += g_aux_latents * trace.active_mask + g_aux_latents * aux_mask

    g_w_enc = g_pre.T @ x
    g_b_enc = g_pre.sum(axis=0)

    if partition is not None:
        coeff = cfg.gamma_effective if gamma_effective is None else gamma_effective
        started = time.perf_counter()
        if ortho_grad is None:
            ortho_grad = ortho_penalty_grad(params.w_dec, partition, cfg.delta)
        elif ortho_grad.shape != params.w_dec.shape:
            raise ConsistencyError(f"ortho gradient has shape {ortho_grad.shape}, decoder {params.w_dec.shape}")
        g_w_dec += coeff * ortho_grad
        if timings is not None:
            timings["ortho"] = timings.get("ortho", 0.0) + time.perf_counter() - started

    return SaeParams(w_enc=g_w_enc, b_enc=g_b_enc, w_dec=g_w_dec, b_dec=g_b_dec)
