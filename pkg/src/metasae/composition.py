"""
Composition Rate Module
=======================
Measures how compositional a dictionary is by training a small BatchTopK
SAE (the meta SAE) on its decoder columns.

The primary decoder columns are normalized to unit length and treated as
data points. The meta SAE has a quarter as many latents as the primary has
features and keeps 4 active per column on average. Its explained variance
over all columns is the composition rate: lower values mean the primary
features are harder to express as combinations of shared parts.

Usage:
    from src.metasae.composition import composition_rate

    rate = composition_rate(params.w_dec, seed=0)
"""

from dataclasses import dataclass

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_eval_logger
from src.datagen.sources import ArrayDataSource
from src.metrics.fidelity import explained_variance
from src.numerics.kernels import as_dense, normalize_columns
from src.numerics.rng import RngStream, DATA_STREAM
from src.sae.model import Mode, SaeConfig, SaeParams, forward
from src.train.trainer import TrainConfig, train
from src.utils.errors import ConfigurationError


# =============================================================================
# Meta-training budget
# =============================================================================
META_K = 4
META_RATIO = 4
META_STEPS = 2000
META_MAX_BATCH = 256
META_LEARNING_RATE = 2e-4
META_ALPHA = 1.0 / 32.0


@dataclass
class MetaSaeResult:
    """Trained meta SAE and the composition rate it achieves."""

    params: SaeParams
    sae_config: SaeConfig
    train_config: TrainConfig
    rate: float


def canonical_columns(w_dec) -> np.ndarray:
    """
    Unit-normalized columns as rows, in a canonical (lexicographic) order.

    Sorting makes the result independent of the primary's feature order.
    """
    unit = normalize_columns(as_dense(w_dec, "w_dec"))
    order = np.lexsort(unit[::-1])
    return unit[:, order].T.copy()


def meta_configs(m: int, seed: int, steps: int = META_STEPS, learning_rate: float = META_LEARNING_RATE):
    """SaeConfig and TrainConfig of the meta SAE for a primary of m features."""
    meta_m = m // META_RATIO
    if meta_m < 2:
        raise ConfigurationError(
            f"primary has {m} features, meta SAE would have {meta_m} latents (need at least 2)",
            key="dict_size",
        )
    sae_cfg = SaeConfig(
        mode=Mode.BATCH_TOPK,
        dict_size=meta_m,
        k_sparsity=min(META_K, meta_m),
        alpha=META_ALPHA,
        chunk_count=1,
    )
    train_cfg = TrainConfig(
        learning_rate=learning_rate,
        batch_size=min(m, META_MAX_BATCH),
        total_steps=steps,
        seed=seed,
        log_every=max(1, steps // 10),
    )
    return sae_cfg, train_cfg


def train_meta_sae(
    w_dec,
    seed: int,
    steps: int = META_STEPS,
    learning_rate: float = META_LEARNING_RATE,
    out_dir=None,
    logger=None,
) -> MetaSaeResult:
    """
    Train the meta SAE on the primary decoder columns.

    Args:
        w_dec: Primary decoder, n × m
        seed: Seed for meta initialization and batching
        steps: Meta training steps
        learning_rate: Meta learning rate
        out_dir: Optional directory for the meta checkpoint and metrics
        logger: Optional logger

    Returns:
        MetaSaeResult

    Raises:
        ConfigurationError: If m / 4 < 2
    """
    if logger is None:
        logger = get_eval_logger()

    w_dec = as_dense(w_dec, "w_dec")
    m = w_dec.shape[1]
    sae_cfg, train_cfg = meta_configs(m, seed, steps, learning_rate)
    columns = canonical_columns(w_dec)

    logger.info(f"Training meta SAE: {m} primary features -> {sae_cfg.dict_size} meta latents, {steps} steps")
    source = ArrayDataSource(columns, RngStream(seed=seed, stream=DATA_STREAM))
    result = train(source, sae_cfg, train_cfg, out_dir=out_dir, logger=logger)

    trace = forward(result.params, sae_cfg, columns)
    rate = explained_variance(columns, trace.recon)
    logger.info(f"Composition rate: {rate:.4f}")
    return MetaSaeResult(params=result.params, sae_config=sae_cfg, train_config=train_cfg, rate=rate)


def composition_rate(w_dec, seed: int, steps: int = META_STEPS, learning_rate: float = META_LEARNING_RATE, logger=None) -> float:
    """Explained variance of the meta SAE over all primary decoder columns."""
    return train_meta_sae(w_dec, seed, steps=steps, learning_rate=learning_rate, logger=logger).rate
