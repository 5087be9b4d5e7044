"""
Trainer Module
==============
Adam training loop for OrtSAE and its baselines.

Every step:
1. Draw a batch from the data source
2. Forward pass, dead-latent mask from the firing history
3. Loss (ortho only on penalty steps) and analytic backward
4. Adam update, firing history update
5. Metrics row every log_every steps, checkpoint every checkpoint_every steps

The checkpoint written at step s holds the parameters used by step s, so a
logged row can be recomputed from it.

Usage:
    from src.train.trainer import TrainConfig, train

    result = train(source, sae_cfg, TrainConfig(total_steps=5000), out_dir="runs/ortsae")
    print(result.history.tail())
"""

import math
import time
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np
import pandas as pd
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_train_logger
from src.numerics.rng import RngStream, PARTITION_STREAM
from src.sae.model import Mode, SaeConfig, SaeParams, forward, init_params
from src.sae.objective import loss, backward
from src.train.auxiliary import dead_latent_mask
from src.train.checkpoint import (
    FINAL_CHECKPOINT, METRICS_FILE, METRICS_COLUMNS, save_checkpoint, save_metrics_log,
)
from src.train.optimizer import TrainState, adam_step, new_train_state
from src.utils.errors import ConfigurationError, ShapeError, TrainingAbortedError


# =============================================================================
# Configuration
# =============================================================================
@dataclass
class TrainConfig:
    """
    Optimization settings.

    Attributes:
        learning_rate: Adam learning rate
        batch_size: Rows per step
        total_steps: Number of optimizer steps
        adam_beta1, adam_beta2, adam_eps: Adam constants
        weight_decay: AdamW decoupled decay (0 = plain Adam)
        dead_window: Steps without firing after which a latent counts as dead
        seed: Seed for initialization and chunk partitions
        checkpoint_every: Write a checkpoint every this many steps (0 = final only)
        log_every: Emit a metrics row every this many steps
    """

    learning_rate: float = 2e-4
    batch_size: int = 256
    total_steps: int = 5000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    dead_window: int = 200
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigurationError(f"must be > 0, got {self.learning_rate}", key="learning_rate")
        for key in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, key) < 1:
                raise ConfigurationError(f"must lie in [0, 1), got {getattr(self, key)}", key=key)
        if not self.adam_eps > 0:
            raise ConfigurationError(f"must be > 0, got {self.adam_eps}", key="adam_eps")
        if self.weight_decay < 0:
            raise ConfigurationError(f"must be >= 0, got {self.weight_decay}", key="weight_decay")
        if self.batch_size < 1:
            raise ConfigurationError(f"must be >= 1, got {self.batch_size}", key="batch_size")
        if self.total_steps < 0:
            raise ConfigurationError(f"must be >= 0, got {self.total_steps}", key="total_steps")
        if self.dead_window < 1:
            raise ConfigurationError(f"must be >= 1, got {self.dead_window}", key="dead_window")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"must be a 64-bit unsigned integer, got {self.seed}", key="seed")
        if self.checkpoint_every < 0:
            raise ConfigurationError(f"must be >= 0, got {self.checkpoint_every}", key="checkpoint_every")
        if self.log_every < 1:
            raise ConfigurationError(f"must be >= 1, got {self.log_every}", key="log_every")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    """
    Outcome of a training run.

    Attributes:
        params: Final parameters
        state: Final training state
        history: Metrics log (step, mse, l0, ortho, dead, total)
        ortho_seconds: Wall time spent on the orthogonality term
        wall_seconds: Wall time of the whole loop
    """

    params: SaeParams
    state: TrainState
    history: pd.DataFrame
    ortho_seconds: float
    wall_seconds: float

    @property
    def ortho_share(self) -> float:
        """Fraction of the loop's wall time spent on the orthogonality term."""
        return self.ortho_seconds / self.wall_seconds if self.wall_seconds > 0 else 0.0

    @property
    def final_dead(self) -> int:
        return int(self.history["dead"].iloc[-1]) if len(self.history) else 0


def checkpoint_metadata(sae_cfg: SaeConfig, train_cfg: TrainConfig, step: int) -> dict:
    """Config echo, step and seed; no timestamps so reruns are byte-identical."""
    config = {**sae_cfg.to_dict(), **train_cfg.to_dict()}
    return {"config": config, "step": step, "seed": train_cfg.seed}


def train(
    data_source,
    sae_cfg: SaeConfig,
    train_cfg: TrainConfig,
    out_dir: Optional[str] = None,
    init: Optional[SaeParams] = None,
    logger=None,
) -> TrainResult:
    """
    Run total_steps of forward / loss / backward / Adam.

    Args:
        data_source: Object with next_batch(batch_size) and width
        sae_cfg: SAE configuration
        train_cfg: Optimization settings
        out_dir: Where to write checkpoints and metrics.csv (None: nothing written)
        init: Starting parameters (default: init_params from the seed)
        logger: Optional logger

    Returns:
        TrainResult

    Raises:
        TrainingAbortedError: On a non-finite loss or gradient
    """
    if logger is None:
        logger = get_train_logger()

    n, m = data_source.width, sae_cfg.dict_size
    seed_stream = RngStream(seed=train_cfg.seed)
    params = init.copy() if init is not None else init_params(n, m, seed_stream)
    if params.n != n or params.m != m:
        raise ShapeError(f"initial parameters are {params.n} x {params.m}, expected {n} x {m}")
    state = new_train_state(params, seed_stream.fork(PARTITION_STREAM))

    logger.info(
        f"Training {sae_cfg.mode.value} SAE: n={n}, m={m}, k={sae_cfg.k_sparsity}, "
        f"gamma={sae_cfg.gamma}, chunks={sae_cfg.chunk_count}, period={sae_cfg.penalty_period}, "
        f"steps={train_cfg.total_steps}, batch={train_cfg.batch_size}, seed={train_cfg.seed}"
    )

    rows = []
    timings = {"ortho": 0.0}
    started = time.perf_counter()

    for step in range(train_cfg.total_steps):
        if out_dir and train_cfg.checkpoint_every and step > 0 and step % train_cfg.checkpoint_every == 0:
            save_checkpoint(
                os.path.join(out_dir, f"step_{step:06d}.saeckpt"),
                params, sae_cfg, checkpoint_metadata(sae_cfg, train_cfg, step), logger,
            )

        x = data_source.next_batch(train_cfg.batch_size)
        trace = forward(params, sae_cfg, x)
        dead_mask = dead_latent_mask(state.last_fired, step, train_cfg.dead_window)

        parts = loss(params, sae_cfg, x, trace, step, state.rng, dead_mask, timings, keep_ortho_grad=True)
        if not math.isfinite(parts.total):
            logger.error(f"Non-finite loss at step {step}: {parts}")
            raise TrainingAbortedError(f"non-finite loss at step {step}")

        grads = backward(
            params, sae_cfg, x, trace, parts.partition, dead_mask, parts.gamma_effective, timings,
            ortho_grad=parts.ortho_grad,
        )
        try:
            params, state = adam_step(
                state, params, grads, train_cfg.learning_rate,
                beta1=train_cfg.adam_beta1,
                beta2=train_cfg.adam_beta2,
                eps=train_cfg.adam_eps,
                weight_decay=train_cfg.weight_decay,
                unit_norm_decoder=sae_cfg.mode is Mode.RELU_L1,
            )
        except TrainingAbortedError as e:
            logger.error(f"Training aborted: {e}")
            raise

        fired = trace.active_mask.any(axis=0)
        state.last_fired = np.where(fired, step, state.last_fired)

        if step % train_cfg.log_every == 0 or step == train_cfg.total_steps - 1:
            row = {
                "step": step,
                "mse": parts.mse,
                "l0": trace.l0,
                "ortho": parts.ortho,
                "dead": int(dead_mask.sum()),
                "total": parts.total,
            }
            rows.append(row)
            logger.info(
                f"step {step} | mse {parts.mse:.6f} | l0 {row['l0']:.2f} | "
                f"ortho {parts.ortho:.4f} | dead {row['dead']} | total {parts.total:.6f}"
            )

    wall = time.perf_counter() - started
    history = pd.DataFrame(rows, columns=METRICS_COLUMNS)

    if out_dir:
        save_checkpoint(
            os.path.join(out_dir, FINAL_CHECKPOINT),
            params, sae_cfg, checkpoint_metadata(sae_cfg, train_cfg, train_cfg.total_steps), logger,
        )
        save_metrics_log(history, os.path.join(out_dir, METRICS_FILE), logger)

    logger.info(f"Training complete in {wall:.1f}s (orthogonality term {timings['ortho']:.1f}s)")
    return TrainResult(
        params=params,
        state=state,
        history=history,
        ortho_seconds=timings["ortho"],
        wall_seconds=wall,
    )
