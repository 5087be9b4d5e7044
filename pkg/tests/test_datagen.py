"""Tests for src/datagen: synthetic worlds, activation files and data sources."""

import struct

import numpy as np
import pytest

from src.datagen.activation_file import (
    ACTIVATION_MAGIC, decode_activations, encode_activations, read_activations, write_activations,
)
from src.datagen.sources import ArrayDataSource, WorldDataSource
from src.datagen.synthetic_world import (
    SyntheticWorld, default_world, firing_summary, load_world, sample_batch, save_world,
)
from src.numerics.rng import RngStream, DATA_STREAM
from src.utils.errors import (
    BadMagicError, ConfigurationError, DimensionOverflowError, FormatError, InsufficientDataError,
    TruncatedFileError,
)


def stream(position=0):
    return RngStream(seed=0, stream=DATA_STREAM).at(position)


# =============================================================================
# Synthetic world
# =============================================================================
class TestSyntheticWorld:
    def test_default_world(self):
        world = default_world(0)
        assert world.dim_n == 32 and world.num_features == 64
        assert np.allclose(np.linalg.norm(world.features, axis=0), 1.0, atol=1e-9)
        assert len(world.composite_pairs) == 8 and len(world.hierarchy) == 8
        assert world.composite_pairs[0] == (0, 1, 0.8)
        assert world.hierarchy[0] == (16, 17, 0.9)

    def test_default_world_is_seeded(self):
        assert np.array_equal(default_world(3).features, default_world(3).features)
        assert not np.array_equal(default_world(3).features, default_world(4).features)

    def test_zero_probabilities(self):
        world = SyntheticWorld(features=np.eye(4), fire_prob=np.zeros(4))
        x, codes = sample_batch(world, 10, stream())
        assert not x.any()
        assert codes.nnz == 0

    def test_single_feature_always_fires(self):
        feature = np.array([[0.6], [0.8]])
        world = SyntheticWorld(features=feature, fire_prob=[1.0], magnitude_range=(1.0, 1.0))
        x, _ = sample_batch(world, 5, stream())
        assert np.allclose(x, np.tile(feature.T, (5, 1)))

    def test_hierarchy_child_needs_parent(self):
        world = SyntheticWorld(
            features=np.eye(3), fire_prob=[0.3, 0.5, 0.2], hierarchy=[(0, 1, 1.0)],
        )
        _, codes = sample_batch(world, 10_000, stream())
        dense = codes.toarray()
        assert not np.any((dense[:, 1] > 0) & (dense[:, 0] == 0))
        assert np.array_equal(dense[:, 1] > 0, dense[:, 0] > 0)

    def test_composite_pairs_co_fire(self):
        world = SyntheticWorld(features=np.eye(2), fire_prob=[0.2, 0.0], composite_pairs=[(0, 1, 1.0)])
        _, codes = sample_batch(world, 2000, stream())
        dense = codes.toarray()
        assert np.array_equal(dense[:, 0] > 0, dense[:, 1] > 0)

    def test_rows_lie_in_span_of_fired_features(self):
        world = default_world(1)
        x, codes = sample_batch(world, 500, stream())
        assert np.allclose(codes @ world.features.T, x, atol=1e-9)
        lo, hi = world.magnitude_range
        assert codes.data.min() >= lo and codes.data.max() <= hi

    def test_firing_frequency_within_three_standard_errors(self):
        probs = np.array([0.02, 0.06, 0.1, 0.3, 0.5])
        world = SyntheticWorld(features=np.eye(5), fire_prob=probs)
        samples = 100_000
        _, codes = sample_batch(world, samples, stream())
        summary = firing_summary(codes)
        stderr = np.sqrt(probs * (1 - probs) / samples)
        assert np.all(np.abs(summary.frequency.to_numpy() - probs) < 3 * stderr + 1e-12)

    def test_same_stream_same_batch(self):
        world = default_world(0)
        a, _ = sample_batch(world, 64, stream(3))
        b, _ = sample_batch(world, 64, stream(3))
        assert a.tobytes() == b.tobytes()

    def test_invalid_probability(self):
        with pytest.raises(ConfigurationError):
            SyntheticWorld(features=np.eye(2), fire_prob=[0.5, 1.5])

    def test_hierarchy_cycle(self):
        with pytest.raises(ConfigurationError, match="hierarchy"):
            SyntheticWorld(features=np.eye(2), fire_prob=[0.5, 0.5], hierarchy=[(0, 1, 0.5), (1, 0, 0.5)])

    def test_batch_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            sample_batch(default_world(0), 0, stream())

    def test_json_round_trip(self, tmp_path):
        world = default_world(2)
        path = save_world(world, str(tmp_path / "world.json"))
        loaded = load_world(path)
        assert np.array_equal(loaded.features, world.features)
        assert np.array_equal(loaded.fire_prob, world.fire_prob)
        assert loaded.composite_pairs == world.composite_pairs
        assert loaded.hierarchy == world.hierarchy


# =============================================================================
# Activation file
# =============================================================================
class TestActivationFile:
    def test_round_trip_after_quantization(self, gen, tmp_path):
        x = gen.standard_normal((7, 5))
        path = write_activations(str(tmp_path / "acts.bin"), x)
        loaded = read_activations(path)
        assert loaded.dtype == np.float64
        assert np.array_equal(loaded, x.astype(np.float32).astype(np.float64))

    def test_layout(self):
        blob = encode_activations([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        assert blob[:8] == b"SAEACT1\x00"
        assert struct.unpack_from("<II", blob, 8) == (3, 2)
        assert struct.unpack_from("<f", blob, 16)[0] == 1.0
        assert len(blob) == 16 + 6 * 4

    @pytest.mark.parametrize("blob,error,offset", [
        (b"", BadMagicError, 0),
        (b"SAEACT2\x00" + bytes(8), BadMagicError, 0),
        (ACTIVATION_MAGIC + bytes(5), TruncatedFileError, 13),
        (ACTIVATION_MAGIC + struct.pack("<II", 1 << 20, 1 << 12), DimensionOverflowError, 8),
        (ACTIVATION_MAGIC + struct.pack("<II", 4, 2) + bytes(8), TruncatedFileError, 24),
        (ACTIVATION_MAGIC + struct.pack("<II", 1, 1) + bytes(8), FormatError, 20),
    ], ids=["empty", "wrong-magic", "short-header", "overflow", "short-payload", "trailing"])
    def test_rejects_corrupted(self, blob, error, offset):
        with pytest.raises(error) as info:
            decode_activations(blob)
        assert info.value.offset == offset
        assert f"byte offset {offset}" in str(info.value)

    def test_empty_file_on_disk(self, tmp_path):
        path = tmp_path / "empty.bin"
        path.write_bytes(b"")
        with pytest.raises(BadMagicError):
            read_activations(str(path))


# =============================================================================
# Data sources
# =============================================================================
class TestDataSources:
    def test_array_source_wraps_and_reshuffles(self):
        data = np.arange(10, dtype=float).reshape(5, 2)
        source = ArrayDataSource(data, RngStream(seed=1))
        first = source.next_batch(5)
        assert sorted(first[:, 0].tolist()) == [0.0, 2.0, 4.0, 6.0, 8.0]
        second = source.next_batch(7)
        assert second.shape == (7, 2)
        assert source.epoch == 2
        assert source.width == 2

    def test_array_source_is_deterministic(self):
        data = np.arange(40, dtype=float).reshape(20, 2)
        a = ArrayDataSource(data, RngStream(seed=5)).next_batch(30)
        b = ArrayDataSource(data, RngStream(seed=5)).next_batch(30)
        assert np.array_equal(a, b)

    def test_array_source_rejects_empty(self):
        with pytest.raises(InsufficientDataError):
            ArrayDataSource(np.zeros((0, 3)), RngStream(seed=0))

    def test_world_source_uses_batch_positions(self):
        world = default_world(0)
        source = WorldDataSource(world, stream())
        source.next_batch(16)
        second = source.next_batch(16)
        expected, _ = sample_batch(world, 16, stream(1))
        assert np.array_equal(second, expected)
        assert source.width == 32
