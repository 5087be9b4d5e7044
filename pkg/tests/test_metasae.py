"""Tests for src/metasae: the meta SAE and the composition rate."""

import os

import numpy as np
import pytest

from src.metasae.composition import (
    META_K, canonical_columns, composition_rate, meta_configs, train_meta_sae,
)
from src.metrics.fidelity import explained_variance
from src.sae.model import Mode, forward
from src.train.checkpoint import FINAL_CHECKPOINT, METRICS_FILE
from src.utils.errors import ConfigurationError


def test_meta_configs_scale_with_primary():
    sae_cfg, train_cfg = meta_configs(128, seed=3)
    assert sae_cfg.mode is Mode.BATCH_TOPK
    assert sae_cfg.dict_size == 32
    assert sae_cfg.k_sparsity == META_K
    assert sae_cfg.chunk_count == 1
    assert train_cfg.batch_size == 128
    assert train_cfg.seed == 3


def test_too_few_primary_features():
    with pytest.raises(ConfigurationError) as info:
        meta_configs(7, seed=0)
    assert info.value.key == "dict_size"


def test_canonical_columns_ignore_feature_order(gen):
    w = gen.standard_normal((6, 12)) * gen.uniform(0.5, 2.0, 12)
    shuffled = w[:, gen.permutation(12)]
    rows = canonical_columns(w)
    assert rows.shape == (12, 6)
    assert np.allclose(np.linalg.norm(rows, axis=1), 1.0)
    assert np.array_equal(rows, canonical_columns(shuffled))


def test_zero_steps_is_deterministic(gen):
    w = gen.standard_normal((8, 16))
    first = composition_rate(w, seed=1, steps=0)
    second = composition_rate(w, seed=1, steps=0)
    assert first == second


def test_permutation_invariance_after_training(gen):
    w = gen.standard_normal((8, 16))
    perm = gen.permutation(16)
    assert composition_rate(w, seed=2, steps=5) == composition_rate(w[:, perm], seed=2, steps=5)


def test_rate_is_explained_variance_of_meta_reconstruction(gen, tmp_path):
    w = gen.standard_normal((8, 16))
    result = train_meta_sae(w, seed=0, steps=3, out_dir=str(tmp_path))
    columns = canonical_columns(w)
    trace = forward(result.params, result.sae_config, columns)
    assert result.rate == explained_variance(columns, trace.recon)
    assert os.path.exists(tmp_path / FINAL_CHECKPOINT)
    assert os.path.exists(tmp_path / METRICS_FILE)


def test_four_atoms_reconstruct_repeated_directions_exactly():
    basis = np.eye(32)
    columns = canonical_columns(np.tile(basis[:, :4], (1, 8)))
    atoms = np.unique(columns, axis=0)
    assert atoms.shape == (4, 32)

    coefficients, *_ = np.linalg.lstsq(atoms.T, columns.T, rcond=None)
    assert explained_variance(columns, (atoms.T @ coefficients).T) > 0.99


@pytest.mark.slow
def test_repeated_directions_compose_better_than_orthogonal():
    basis = np.eye(32)
    repeated = np.tile(basis[:, :4], (1, 8))
    orthogonal = basis

    repeated_rate = composition_rate(repeated, seed=0)
    orthogonal_rate = composition_rate(orthogonal, seed=0)

    assert repeated_rate > 0.99
    # 8 meta latents explain at most 8/31 of 32 centered orthonormal rows
    assert orthogonal_rate <= 8 / 31 + 1e-9
    assert orthogonal_rate < repeated_rate
