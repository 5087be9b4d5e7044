"""
Checkpoint Module
=================
SAECKPT1 checkpoint files and the training metrics CSV.

Checkpoint layout (little-endian):

    magic     b"SAECKPT1"                     8 bytes
    n, m      uint32, uint32                  8 bytes
    mode tag  uint8 (0 relu_l1, 1 topk, 2 batch_topk)
    W_enc (m×n), b_enc (m), W_dec (n×m), b_dec (n)   float32, row-major
    meta_len  uint32, then meta_len bytes of UTF-8 JSON
              (config echo, step, seed)

Usage:
    from src.train.checkpoint import save_checkpoint, load_checkpoint

    save_checkpoint("ck/final.saeckpt", params, sae_cfg, {"step": 5000, "seed": 0})
    ckpt = load_checkpoint("ck/final.saeckpt")
"""

import json
import struct
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np
import pandas as pd
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_train_logger
from src.sae.model import Mode, SaeConfig, SaeParams, PARAM_FIELDS
from src.utils.errors import BadMagicError, DimensionOverflowError, FormatError, TruncatedFileError


CHECKPOINT_MAGIC = b"SAECKPT1"
DIMS = struct.Struct("<II")
MODE_TAG = struct.Struct("<B")
META_LEN = struct.Struct("<I")
FLOAT32_LE = np.dtype("<f4")
MAX_DIM = 1 << 24
FINAL_CHECKPOINT = "final.saeckpt"
METRICS_FILE = "metrics.csv"
METRICS_COLUMNS = ["step", "mse", "l0", "ortho", "dead", "total"]


@dataclass
class Checkpoint:
    """Decoded checkpoint: parameters, mode and metadata."""

    params: SaeParams
    mode: Mode
    metadata: Dict[str, Any]

    def sae_config(self) -> SaeConfig:
        """Rebuild the SaeConfig echoed in the metadata."""
        config = dict(self.metadata.get("config", {}))
        sae_keys = {k: v for k, v in config.items() if k in SaeConfig.__dataclass_fields__ or k == "lambda"}
        if "lambda" in sae_keys:
            sae_keys["lam"] = sae_keys.pop("lambda")
        sae_keys["mode"] = self.mode
        sae_keys.setdefault("dict_size", self.params.m)
        return SaeConfig(**sae_keys)


def encode_checkpoint(params: SaeParams, mode: Mode, metadata: Dict[str, Any]) -> bytes:
    """Serialize parameters and metadata to SAECKPT1 bytes."""
    parts = [CHECKPOINT_MAGIC, DIMS.pack(params.n, params.m), MODE_TAG.pack(Mode(mode).tag)]
    for _, value in params.items():
        parts.append(np.ascontiguousarray(value).astype(FLOAT32_LE).tobytes(order="C"))
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts.append(META_LEN.pack(len(meta)))
    parts.append(meta)
    return b"".join(parts)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    """
    Parse SAECKPT1 bytes.

    Raises:
        BadMagicError, TruncatedFileError, DimensionOverflowError, FormatError
    """
    offset = len(CHECKPOINT_MAGIC)
    if len(blob) < offset or blob[:offset] != CHECKPOINT_MAGIC:
        raise BadMagicError("not a checkpoint: bad magic", offset=0)
    if len(blob) < offset + DIMS.size + MODE_TAG.size:
        raise TruncatedFileError("header is truncated", offset=len(blob))

    n, m = DIMS.unpack_from(blob, offset)
    if not (0 < n <= MAX_DIM and 0 < m <= MAX_DIM):
        raise DimensionOverflowError(f"dimensions n={n}, m={m} out of range", offset=offset)
    offset += DIMS.size

    (tag,) = MODE_TAG.unpack_from(blob, offset)
    try:
        mode = Mode.from_tag(tag)
    except ValueError:
        raise FormatError(f"unknown mode tag {tag}", offset=offset)
    offset += MODE_TAG.size

    shapes = {"w_enc": (m, n), "b_enc": (m,), "w_dec": (n, m), "b_dec": (n,)}
    values = {}
    for name in PARAM_FIELDS:
        shape = shapes[name]
        count = int(np.prod(shape))
        end = offset + count * FLOAT32_LE.itemsize
        if len(blob) < end:
            raise TruncatedFileError(f"{name} is truncated", offset=len(blob))
        values[name] = np.frombuffer(blob, dtype=FLOAT32_LE, count=count, offset=offset).astype(np.float64).reshape(shape)
        offset = end

    if len(blob) < offset + META_LEN.size:
        raise TruncatedFileError("metadata length is missing", offset=len(blob))
    (meta_len,) = META_LEN.unpack_from(blob, offset)
    offset += META_LEN.size
    if len(blob) < offset + meta_len:
        raise TruncatedFileError(f"metadata declares {meta_len} bytes", offset=len(blob))
    if len(blob) > offset + meta_len:
        raise FormatError("unexpected trailing bytes", offset=offset + meta_len)
    try:
        metadata = json.loads(blob[offset:offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"metadata is not valid JSON: {e}", offset=offset)

    return Checkpoint(params=SaeParams(**values), mode=mode, metadata=metadata)


def save_checkpoint(path: str, params: SaeParams, sae_cfg: SaeConfig, metadata: Dict[str, Any], logger=None) -> str:
    """
    Write a checkpoint; metadata gets the config echo under "config".

    Returns:
        The path written
    """
    if logger is None:
        logger = get_train_logger()

    meta = dict(metadata)
    meta.setdefault("config", sae_cfg.to_dict())
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_checkpoint(params, sae_cfg.mode, meta))

    logger.info(f"Checkpoint saved to: {path}")
    return path


def resolve_checkpoint_path(path: str) -> str:
    """A run directory resolves to its final checkpoint."""
    if os.path.isdir(path):
        return os.path.join(path, FINAL_CHECKPOINT)
    return path


def load_checkpoint(path: str) -> Checkpoint:
    with open(resolve_checkpoint_path(path), "rb") as f:
        return decode_checkpoint(f.read())


def save_metrics_log(history: pd.DataFrame, path: str, logger=None) -> str:
    """Write the training metrics log (step,mse,l0,ortho,dead,total)."""
    if logger is None:
        logger = get_train_logger()

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    history[METRICS_COLUMNS].to_csv(path, index=False)
    logger.info(f"Metrics log saved to: {path}")
    return path
