"""
Data Sources Module
===================
Batch providers for the training loop.

Both sources are deterministic functions of their RngStream:
- ArrayDataSource walks a fixed matrix in shuffled order and reshuffles
  when it runs out (wrap-around).
- WorldDataSource draws fresh samples from a SyntheticWorld every call.
"""

import numpy as np
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.datagen.synthetic_world import SyntheticWorld, sample_batch
from src.numerics.kernels import as_dense
from src.numerics.rng import RngStream
from src.utils.errors import InsufficientDataError


class ArrayDataSource:
    """
    Shuffled, wrapping batches over an in-memory matrix.

    Attributes:
        data: N × n matrix
        epoch: Number of completed passes over the data
    """

    def __init__(self, data, rng: RngStream):
        self.data = as_dense(data, "data")
        if self.data.shape[0] == 0:
            raise InsufficientDataError("data source is empty")
        self._rng = rng
        self.epoch = 0
        self._order = self._shuffle()
        self._cursor = 0

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def _shuffle(self) -> np.ndarray:
        return self._rng.at(self.epoch).generator().permutation(self.data.shape[0])

    def next_batch(self, batch_size: int) -> np.ndarray:
        rows = []
        needed = batch_size
        while needed > 0:
            if self._cursor == len(self._order):
                self.epoch += 1
                self._order = self._shuffle()
                self._cursor = 0
            take = self._order[self._cursor:self._cursor + needed]
            self._cursor += len(take)
            needed -= len(take)
            rows.append(take)
        return self.data[np.concatenate(rows)]


class WorldDataSource:
    """Fresh synthetic batches; batch i uses stream position i."""

    def __init__(self, world: SyntheticWorld, rng: RngStream):
        self.world = world
        self._rng = rng
        self.batches_drawn = 0

    @property
    def width(self) -> int:
        return self.world.dim_n

    def next_batch(self, batch_size: int) -> np.ndarray:
        x, _ = sample_batch(self.world, batch_size, self._rng.at(self.batches_drawn))
        self.batches_drawn += 1
        return x
