"""
Activation File Module
======================
Binary activation dumps.

Layout (all little-endian):

    offset 0   magic  b"SAEACT1\\0"          8 bytes
    offset 8   n_rows uint32
    offset 12  n_cols uint32
    offset 16  payload float32, row-major, n_rows × n_cols values

Values are stored as 32-bit and widened to 64-bit on load.

Usage:
    from src.datagen.activation_file import write_activations, read_activations

    write_activations("data/raw/activations.bin", x)
    x = read_activations("data/raw/activations.bin")
"""

import struct

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from orchestrator.logger import get_data_logger
from src.numerics.kernels import as_dense
from src.utils.errors import BadMagicError, DimensionOverflowError, FormatError, TruncatedFileError


ACTIVATION_MAGIC = b"SAEACT1\x00"
HEADER = struct.Struct("<II")
HEADER_SIZE = len(ACTIVATION_MAGIC) + HEADER.size
MAX_ELEMENTS = 2 ** 31 - 1
FLOAT32_LE = np.dtype("<f4")


def encode_activations(x) -> bytes:
    """Serialize a DenseMatrix to the activation-file byte layout."""
    x = as_dense(x, "activations")
    rows, cols = x.shape
    if rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{rows} x {cols} exceeds {MAX_ELEMENTS} values", offset=len(ACTIVATION_MAGIC))
    return ACTIVATION_MAGIC + HEADER.pack(rows, cols) + x.astype(FLOAT32_LE).tobytes(order="C")


def decode_activations(blob: bytes) -> np.ndarray:
    """
    Parse activation-file bytes.

    Raises:
        BadMagicError: Missing or wrong magic (offset 0)
        TruncatedFileError: Header or payload shorter than declared
        DimensionOverflowError: Declared element count too large
        FormatError: Trailing bytes after the payload
    """
    if len(blob) < len(ACTIVATION_MAGIC) or blob[: len(ACTIVATION_MAGIC)] != ACTIVATION_MAGIC:
        raise BadMagicError("not an activation file: bad magic", offset=0)
    if len(blob) < HEADER_SIZE:
        raise TruncatedFileError("header is truncated", offset=len(blob))

    rows, cols = HEADER.unpack_from(blob, len(ACTIVATION_MAGIC))
    if rows * cols > MAX_ELEMENTS:
        raise DimensionOverflowError(f"declared {rows} x {cols} exceeds {MAX_ELEMENTS} values", offset=len(ACTIVATION_MAGIC))

    expected = HEADER_SIZE + rows * cols * FLOAT32_LE.itemsize
    if len(blob) < expected:
        raise TruncatedFileError(
            f"payload holds {len(blob) - HEADER_SIZE} bytes, header declares {rows} x {cols}",
            offset=len(blob),
        )
    if len(blob) > expected:
        raise FormatError(f"{len(blob) - expected} unexpected trailing bytes", offset=expected)

    payload = np.frombuffer(blob, dtype=FLOAT32_LE, count=rows * cols, offset=HEADER_SIZE)
    return payload.astype(np.float64).reshape(rows, cols)


def write_activations(path: str, x, logger=None) -> str:
    """
    Write a matrix as an activation file.

    Args:
        path: Output path (parent directories are created)
        x: DenseMatrix to store
        logger: Optional logger

    Returns:
        The path written
    """
    if logger is None:
        logger = get_data_logger()

    blob = encode_activations(x)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(blob)

    logger.info(f"Activations saved to: {path} ({np.shape(x)[0]} x {np.shape(x)[1]})")
    return path


def read_activations(path: str, logger=None) -> np.ndarray:
    """Read an activation file into a float64 DenseMatrix."""
    if logger is None:
        logger = get_data_logger()

    with open(path, "rb") as f:
        x = decode_activations(f.read())

    logger.info(f"Loaded activations from {path}: {x.shape[0]} rows, {x.shape[1]} columns")
    return x
