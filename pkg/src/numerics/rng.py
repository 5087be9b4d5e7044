"""
RNG Stream Module
=================
Splittable, counter-based random streams.

An RngStream is a (seed, stream, position) triple on top of numpy's Philox
generator. The seed and stream id form the Philox key; the position selects
a disjoint block of the counter space. Any (seed, stream, position) therefore
reproduces the same numbers on every platform, and a training step can draw
its chunk partition from (seed, step) without shared mutable state.

Usage:
    from src.numerics.rng import RngStream, PARTITION_STREAM

    rng = RngStream(seed=7, stream=PARTITION_STREAM)
    perm = rng.at(step).generator().permutation(128)
"""

from dataclasses import dataclass, replace

import numpy as np


# Stream ids (one per consumer, so draws never overlap)
INIT_STREAM = 1
PARTITION_STREAM = 2
DATA_STREAM = 3
WORLD_STREAM = 4
EVAL_STREAM = 5

# Each position owns 2**64 Philox blocks
_POSITION_SHIFT = 64
_MASK_64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """
    Deterministic random stream.

    Attributes:
        seed: 64-bit unsigned seed
        stream: Stream id separating independent consumers of one seed
        position: Block index inside the stream
    """

    seed: int
    stream: int = 0
    position: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK_64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.position < 0:
            raise ValueError(f"position must be non-negative, got {self.position}")

    def at(self, position: int) -> "RngStream":
        """Same stream, different position."""
        return replace(self, position=position)

    def fork(self, stream: int) -> "RngStream":
        """Same seed, another stream id, position reset."""
        return replace(self, stream=stream, position=0)

    def advance(self, count: int = 1) -> "RngStream":
        """Stream moved forward by count positions."""
        return replace(self, position=self.position + count)

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at this stream's block."""
        key = (self.stream << 64) | self.seed
        counter = self.position << _POSITION_SHIFT
        return np.random.Generator(np.random.Philox(key=key, counter=counter))
