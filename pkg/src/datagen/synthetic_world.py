"""
Synthetic World Module
======================
Superposition data with known ground-truth features.

A world holds F unit-norm feature directions in R^n (F > n gives
superposition) and rules for how they fire:

- every feature fires independently with its own probability
- composite pairs (i, j, p): when either member fires, both fire with
  probability p. This puts composition pressure on an SAE.
- hierarchy (parent, child, p): the child only fires together with its
  parent, with conditional probability p. This puts absorption pressure on
  an SAE.

Each firing feature gets a coefficient drawn uniformly from magnitude_range.

Usage:
    from src.datagen.synthetic_world import default_world, sample_batch

    world = default_world(seed=0)
    x, codes = sample_batch(world, 256, RngStream(seed=0, stream=DATA_STREAM))
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(__file__))))

from src.numerics.kernels import as_dense, normalize_columns
from src.numerics.rng import RngStream, WORLD_STREAM
from src.utils.errors import ConfigurationError


# =============================================================================
# Constants (desk-scale default world)
# =============================================================================
DEFAULT_DIM = 32
DEFAULT_FEATURES = 64
DEFAULT_FIRE_PROB = 0.06
DEFAULT_COMPOSITE_PAIRS = 8
DEFAULT_CO_FIRE_PROB = 0.8
DEFAULT_HIERARCHY_PAIRS = 8
DEFAULT_CONDITIONAL_PROB = 0.9
DEFAULT_MAGNITUDE_RANGE = (0.5, 1.5)


@dataclass
class SyntheticWorld:
    """
    Ground-truth dictionary plus firing rules.

    Attributes:
        features: n × F matrix of unit-norm feature columns
        fire_prob: Length-F independent firing probabilities
        composite_pairs: (i, j, co_fire_prob) triples
        hierarchy: (parent, child, conditional_prob) triples
        magnitude_range: (lo, hi) of the uniform coefficient draw
    """

    features: np.ndarray
    fire_prob: np.ndarray
    composite_pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    hierarchy: List[Tuple[int, int, float]] = field(default_factory=list)
    magnitude_range: Tuple[float, float] = DEFAULT_MAGNITUDE_RANGE

    def __post_init__(self):
        self.features = as_dense(self.features, "features")
        self.fire_prob = np.asarray(self.fire_prob, dtype=np.float64)
        self.composite_pairs = [(int(i), int(j), float(p)) for i, j, p in self.composite_pairs]
        self.hierarchy = [(int(a), int(b), float(p)) for a, b, p in self.hierarchy]
        self.magnitude_range = (float(self.magnitude_range[0]), float(self.magnitude_range[1]))
        self.validate()

    @property
    def dim_n(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        F = self.num_features
        norms = np.linalg.norm(self.features, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9, rtol=0):
            raise ConfigurationError("feature columns must have unit norm", key="features")
        if self.fire_prob.shape != (F,):
            raise ConfigurationError(f"expected {F} probabilities, got {self.fire_prob.shape}", key="fire_prob")
        probs = [self.fire_prob] + [np.array([p]) for _, _, p in self.composite_pairs + self.hierarchy]
        if any(((p < 0) | (p > 1)).any() for p in probs):
            raise ConfigurationError("probabilities must lie in [0, 1]", key="fire_prob")
        for i, j, _ in self.composite_pairs + self.hierarchy:
            if not (0 <= i < F and 0 <= j < F) or i == j:
                raise ConfigurationError(f"invalid feature pair ({i}, {j})", key="pairs")
        lo, hi = self.magnitude_range
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"invalid range {self.magnitude_range}", key="magnitude_range")
        self.hierarchy_order()

    def hierarchy_order(self) -> List[Tuple[int, int, float]]:
        """
        Hierarchy edges ordered so every parent is settled before its children.

        Raises:
            ConfigurationError: If the hierarchy has a cycle
        """
        pending = list(self.hierarchy)
        ordered = []
        while pending:
            children = {child for _, child, _ in pending}
            ready = [edge for edge in pending if edge[0] not in children]
            if not ready:
                raise ConfigurationError("hierarchy contains a cycle", key="hierarchy")
            ordered.extend(ready)
            pending = [edge for edge in pending if edge not in ready]
        return ordered


def default_world(
    seed: int,
    n: int = DEFAULT_DIM,
    num_features: int = DEFAULT_FEATURES,
    fire_prob: float = DEFAULT_FIRE_PROB,
    composite_pairs: int = DEFAULT_COMPOSITE_PAIRS,
    co_fire_prob: float = DEFAULT_CO_FIRE_PROB,
    hierarchy_pairs: int = DEFAULT_HIERARCHY_PAIRS,
    conditional_prob: float = DEFAULT_CONDITIONAL_PROB,
    magnitude_range: Tuple[float, float] = DEFAULT_MAGNITUDE_RANGE,
) -> SyntheticWorld:
    """
    Build the desk-scale world.

    Features are random Gaussian directions scaled to unit norm. Composite
    pairs use features 0..2c-1 as (0,1), (2,3), ...; hierarchy pairs use the
    next 2h features as (parent, child) = (2c, 2c+1), ...

    Args:
        seed: World seed
        n: Ambient dimension
        num_features: Number of ground-truth features F
        fire_prob: Independent firing probability of every feature
        composite_pairs: Number of co-firing pairs
        co_fire_prob: Co-firing probability of each pair
        hierarchy_pairs: Number of parent → child pairs
        conditional_prob: P(child | parent)
        magnitude_range: Coefficient range

    Returns:
        SyntheticWorld
    """
    if 2 * (composite_pairs + hierarchy_pairs) > num_features:
        raise ConfigurationError("not enough features for the requested pairs", key="num_features")

    gen = RngStream(seed=seed, stream=WORLD_STREAM).generator()
    features = normalize_columns(gen.standard_normal((n, num_features)))

    pairs = [(2 * p, 2 * p + 1, co_fire_prob) for p in range(composite_pairs)]
    start = 2 * composite_pairs
    hierarchy = [(start + 2 * h, start + 2 * h + 1, conditional_prob) for h in range(hierarchy_pairs)]

    return SyntheticWorld(
        features=features,
        fire_prob=np.full(num_features, fire_prob),
        composite_pairs=pairs,
        hierarchy=hierarchy,
        magnitude_range=magnitude_range,
    )


def sample_batch(world: SyntheticWorld, batch: int, rng: RngStream):
    """
    Draw a batch of superposed activations.

    Args:
        world: Synthetic world
        batch: Number of rows (>= 1)
        rng: Stream positioned for this batch

    Returns:
        (x, codes): x is batch × n, codes a batch × F scipy CSR matrix with
        the coefficient of every feature that fired (x == codes · featuresᵀ)
    """
    if batch < 1:
        raise ConfigurationError(f"batch must be >= 1, got {batch}", key="batch")
    gen = rng.generator()
    F = world.num_features

    fired = gen.random((batch, F)) < world.fire_prob

    for i, j, p in world.composite_pairs:
        together = (fired[:, i] | fired[:, j]) & (gen.random(batch) < p)
        fired[:, i] |= together
        fired[:, j] |= together

    # applied last so that hierarchy always wins
    for parent, child, p in world.hierarchy_order():
        fired[:, child] = fired[:, parent] & (gen.random(batch) < p)

    lo, hi = world.magnitude_range
    magnitudes = gen.uniform(lo, hi, size=(batch, F))
    coefficients = np.where(fired, magnitudes, 0.0)

    codes = sparse.csr_matrix(coefficients)
    x = coefficients @ world.features.T
    return x, codes


def firing_summary(codes: sparse.csr_matrix) -> pd.DataFrame:
    """Per-feature empirical firing frequency and mean coefficient."""
    active = codes.copy()
    active.data = np.ones_like(active.data)
    counts = np.asarray(active.sum(axis=0)).ravel()
    totals = np.asarray(codes.sum(axis=0)).ravel()
    return pd.DataFrame({
        "feature_id": np.arange(codes.shape[1]),
        "frequency": counts / codes.shape[0],
        "mean_coefficient": np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0),
    })


# =============================================================================
# JSON description (written next to generated samples)
# =============================================================================
def world_to_dict(world: SyntheticWorld) -> Dict:
    return {
        "dim_n": world.dim_n,
        "num_features": world.num_features,
        "features": world.features.T.tolist(),   # one list per feature
        "fire_prob": world.fire_prob.tolist(),
        "composite_pairs": [list(t) for t in world.composite_pairs],
        "hierarchy": [list(t) for t in world.hierarchy],
        "magnitude_range": list(world.magnitude_range),
    }


def world_from_dict(data: Dict) -> SyntheticWorld:
    return SyntheticWorld(
        features=np.asarray(data["features"], dtype=np.float64).T,
        fire_prob=data["fire_prob"],
        composite_pairs=[tuple(t) for t in data.get("composite_pairs", [])],
        hierarchy=[tuple(t) for t in data.get("hierarchy", [])],
        magnitude_range=tuple(data.get("magnitude_range", DEFAULT_MAGNITUDE_RANGE)),
    )


def save_world(world: SyntheticWorld, path: str) -> str:
    """Write the world description as JSON and return the path."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(world_to_dict(world), f, indent=2)
    return path


def load_world(path: str) -> SyntheticWorld:
    with open(path, "r", encoding="utf-8") as f:
        return world_from_dict(json.load(f))
