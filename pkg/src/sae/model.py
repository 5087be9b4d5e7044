"""
SAE Model Module
================
Parameterization and forward pass of the sparse autoencoder.

    preacts = x · W_encᵀ + b_enc
    latents = select(ReLU(preacts))          (ReLU-L1 | TopK | BatchTopK)
    recon   = latents · W_decᵀ + b_dec

TopK and BatchTopK select on the post-ReLU values, so latents stay
non-negative and a row never keeps a non-positive entry.

Usage:
    from src.sae.model import SaeConfig, init_params, forward

    cfg = SaeConfig(mode="batch_topk", dict_size=128, k_sparsity=8)
    params = init_params(n=32, m=128, rng=RngStream(seed=0))
    trace = forward(params, cfg, x)
"""

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import as_dense, row_topk_mask, topk_indices, normalize_columns
from src.numerics.rng import RngStream, INIT_STREAM
from src.utils.errors import ConfigurationError, ShapeError


# =============================================================================
# Constants
# =============================================================================
DEFAULT_DELTA = 1e-8
LATENTS_PER_CHUNK = 8192   # chunk-count rule used at scale: K(m) = ceil(m / 8192)


class Mode(str, Enum):
    """Activation mode of the SAE."""

    RELU_L1 = "relu_l1"
    TOPK = "topk"
    BATCH_TOPK = "batch_topk"

    @property
    def tag(self) -> int:
        """Single-byte tag used in the checkpoint header."""
        return _MODE_TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "Mode":
        for mode, value in _MODE_TAGS.items():
            if value == tag:
                return mode
        raise ValueError(f"unknown mode tag {tag}")


_MODE_TAGS = {Mode.RELU_L1: 0, Mode.TOPK: 1, Mode.BATCH_TOPK: 2}


def default_chunk_count(m: int) -> int:
    """Number of orthogonality chunks for a dictionary of m latents."""
    return max(1, math.ceil(m / LATENTS_PER_CHUNK))


def default_aux_k(k_sparsity: int, m: int) -> int:
    """Dead latents used by the auxiliary reconstruction."""
    return min(2 * k_sparsity, m // 2)


# =============================================================================
# Configuration
# =============================================================================
@dataclass
class SaeConfig:
    """
    Architecture and loss coefficients of one SAE.

    Attributes:
        mode: Activation mode (relu_l1, topk or batch_topk)
        dict_size: Number of latents m
        k_sparsity: Target L0 for TopK / BatchTopK
        lam: Sparsity coefficient λ (config key "lambda"), ReLU-L1 only
        alpha: Auxiliary (dead latent) loss coefficient α
        gamma: Orthogonality coefficient γ
        delta: Cosine denominator clamp δ
        chunk_count: Number of random chunks K for the orthogonality penalty
        penalty_period: Apply the penalty every this many steps (scaled up by it)
        aux_k: Dead latents used by the auxiliary reconstruction
    """

    mode: Mode = Mode.BATCH_TOPK
    dict_size: int = 128
    k_sparsity: int = 8
    lam: float = 0.0
    alpha: float = 1.0 / 32.0
    gamma: float = 0.0
    delta: float = DEFAULT_DELTA
    chunk_count: Optional[int] = None
    penalty_period: int = 1
    aux_k: Optional[int] = None

    def __post_init__(self):
        try:
            self.mode = Mode(self.mode)
        except ValueError:
            raise ConfigurationError(
                f"unknown mode {self.mode!r}, expected one of {[m.value for m in Mode]}", key="mode"
            )
        if self.chunk_count is None:
            self.chunk_count = default_chunk_count(self.dict_size)
        if self.aux_k is None:
            self.aux_k = default_aux_k(self.k_sparsity, self.dict_size)
        self.validate()

    def validate(self) -> None:
        """Check every invariant, raising ConfigurationError naming the key."""
        m = self.dict_size
        if m < 2:
            raise ConfigurationError(f"must be at least 2, got {m}", key="dict_size")
        if not 0 <= self.k_sparsity <= m:
            raise ConfigurationError(f"must lie in [0, {m}], got {self.k_sparsity}", key="k_sparsity")
        if self.mode in (Mode.TOPK, Mode.BATCH_TOPK) and self.k_sparsity < 1:
            raise ConfigurationError("must be at least 1 for TopK modes", key="k_sparsity")
        for key in ("lam", "alpha", "gamma"):
            value = getattr(self, key)
            if not (value >= 0 and math.isfinite(value)):
                raise ConfigurationError(f"must be finite and >= 0, got {value}", key=_public_key(key))
        if self.mode in (Mode.TOPK, Mode.BATCH_TOPK) and self.lam != 0:
            raise ConfigurationError("must be 0 for TopK and BatchTopK modes", key="lambda")
        if not self.delta > 0:
            raise ConfigurationError(f"must be > 0, got {self.delta}", key="delta")
        if not 1 <= self.chunk_count <= m:
            raise ConfigurationError(f"must lie in [1, {m}], got {self.chunk_count}", key="chunk_count")
        if m % self.chunk_count != 0:
            raise ConfigurationError(
                f"dict_size {m} is not divisible by chunk_count {self.chunk_count}", key="chunk_count"
            )
        if m // self.chunk_count < 2:
            raise ConfigurationError("every chunk needs at least 2 latents", key="chunk_count")
        if self.penalty_period < 1:
            raise ConfigurationError(f"must be >= 1, got {self.penalty_period}", key="penalty_period")
        if not 0 <= self.aux_k <= m:
            raise ConfigurationError(f"must lie in [0, {m}], got {self.aux_k}", key="aux_k")

    @property
    def gamma_effective(self) -> float:
        """γ scaled by the penalty period, applied on penalty steps only."""
        return self.gamma * self.penalty_period

    def ortho_applies(self, step: int) -> bool:
        """True when the orthogonality term is part of the loss at this step."""
        return self.gamma > 0 and step % self.penalty_period == 0

    def to_dict(self) -> Dict:
        """Flat dictionary using the public config key names."""
        out = asdict(self)
        out["mode"] = self.mode.value
        out["lambda"] = out.pop("lam")
        return out


def _public_key(name: str) -> str:
    return "lambda" if name == "lam" else name


# =============================================================================
# Parameters and traces
# =============================================================================
PARAM_FIELDS = ("w_enc", "b_enc", "w_dec", "b_dec")


@dataclass
class SaeParams:
    """
    Encoder/decoder weights and biases. Gradients use the same container.

    Attributes:
        w_enc: m × n encoder matrix
        b_enc: length-m encoder bias
        w_dec: n × m decoder matrix (columns are feature directions)
        b_dec: length-n decoder bias
    """

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray

    def __post_init__(self):
        m, n = np.shape(self.w_enc)
        expected = {"w_enc": (m, n), "b_enc": (m,), "w_dec": (n, m), "b_dec": (n,)}
        for name, shape in expected.items():
            if np.shape(getattr(self, name)) != shape:
                raise ShapeError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")

    @property
    def n(self) -> int:
        return self.w_enc.shape[1]

    @property
    def m(self) -> int:
        return self.w_enc.shape[0]

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in PARAM_FIELDS:
            yield name, getattr(self, name)

    def copy(self) -> "SaeParams":
        return SaeParams(**{name: value.copy() for name, value in self.items()})

    def zeros_like(self) -> "SaeParams":
        return SaeParams(**{name: np.zeros_like(value) for name, value in self.items()})

    def is_finite(self) -> bool:
        return all(np.isfinite(value).all() for _, value in self.items())


@dataclass
class ForwardTrace:
    """
    Intermediate values of one forward pass.

    Attributes:
        preacts: B × m encoder pre-activations
        latents: B × m sparse code (non-negative)
        active_mask: B × m boolean support of latents
        recon: B × n reconstruction (None until decoded)
    """

    preacts: np.ndarray
    latents: np.ndarray
    active_mask: np.ndarray
    recon: Optional[np.ndarray] = field(default=None)

    @property
    def l0(self) -> float:
        """Mean number of active latents per row."""
        return float(self.active_mask.sum(axis=1).mean())


def init_params(n: int, m: int, rng: RngStream) -> SaeParams:
    """
    Initialize an SAE.

    Decoder columns are isotropic Gaussian directions scaled to unit norm,
    the encoder is the decoder transpose and both biases are zero.

    Args:
        n: Input dimension
        m: Number of latents
        rng: Seed source (the INIT stream of it is used)

    Returns:
        Fresh SaeParams
    """
    gen = rng.fork(INIT_STREAM).generator()
    w_dec = normalize_columns(gen.standard_normal((n, m)))
    return SaeParams(
        w_enc=np.ascontiguousarray(w_dec.T),
        b_enc=np.zeros(m),
        w_dec=w_dec,
        b_dec=np.zeros(n),
    )


# =============================================================================
# Forward pass
# =============================================================================
def select_support(post: np.ndarray, cfg: SaeConfig) -> np.ndarray:
    """
    Boolean support of the latents given post-ReLU values.

    ReLU-L1 keeps every positive entry, TopK the k largest per row and
    BatchTopK the B·k largest across the whole batch. Only positive entries
    are ever kept.
    """
    positive = post > 0
    if cfg.mode is Mode.RELU_L1:
        return positive
    if cfg.mode is Mode.TOPK:
        return row_topk_mask(post, cfg.k_sparsity) & positive

    batch = post.shape[0]
    flat = np.zeros(post.size, dtype=bool)
    flat[topk_indices(post.ravel(), batch * cfg.k_sparsity)] = True
    return flat.reshape(post.shape) & positive


def encode(params: SaeParams, cfg: SaeConfig, x: np.ndarray) -> ForwardTrace:
    """
    Encode a batch into sparse latents.

    Args:
        params: SAE parameters
        cfg: SAE configuration (selects the activation mode)
        x: B × n batch

    Returns:
        ForwardTrace with preacts, latents and active_mask filled in

    Raises:
        ShapeError: If x.cols != n

    Example:
        >>> trace = encode(params, SaeConfig(mode="relu_l1", dict_size=2, k_sparsity=1), [[1, -2]])
    """
    x = as_dense(x, "x")
    if x.shape[1] != params.n:
        raise ShapeError(f"input has {x.shape[1]} columns, SAE expects {params.n}")
    preacts = x @ params.w_enc.T + params.b_enc
    post = np.maximum(preacts, 0.0)
    mask = select_support(post, cfg)
    latents = np.where(mask, post, 0.0)
    return ForwardTrace(preacts=preacts, latents=latents, active_mask=mask)


def decode(params: SaeParams, latents: np.ndarray) -> np.ndarray:
    """
    Map latents back to input space: latents · W_decᵀ + b_dec.

    Raises:
        ShapeError: If latents.cols != m
    """
    latents = as_dense(latents, "latents")
    if latents.shape[1] != params.m:
        raise ShapeError(f"latents have {latents.shape[1]} columns, SAE has {params.m} latents")
    return latents @ params.w_dec.T + params.b_dec


def forward(params: SaeParams, cfg: SaeConfig, x: np.ndarray) -> ForwardTrace:
    """Encode then decode; the returned trace has recon filled in."""
    trace = encode(params, cfg, x)
    trace.recon = decode(params, trace.latents)
    return trace
