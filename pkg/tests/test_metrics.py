"""Tests for src/metrics: fidelity, geometry, decomposition and the report."""

import math

import numpy as np
import pandas as pd
import pytest

from src.datagen.synthetic_world import SyntheticWorld, default_world, sample_batch
from src.metrics.decomposition import decompose_dictionary, decompose_feature
from src.metrics.fidelity import explained_variance, kl_divergence, kl_divergence_score
from src.metrics.geometry import (
    DEFAULT_THRESHOLDS, clustering_coefficient, ground_truth_mmcs, mean_cos_sim, nearest_cosine_table,
    unique_features,
)
from src.metrics.report import CLUSTERING_FILE, NEAREST_FILE, REPORT_FILE, build_report, save_report
from src.sae.model import SaeConfig, init_params
from src.sae.ortho import cosine_sim
from src.numerics.rng import RngStream
from src.utils.errors import ConfigurationError, UndefinedBaselineError, UndefinedInputError

PLANE_TRIPLE = np.array([[1.0, 0.0, 1 / math.sqrt(2)], [0.0, 1.0, 1 / math.sqrt(2)]])


# =============================================================================
# Explained variance
# =============================================================================
class TestExplainedVariance:
    def test_perfect(self, gen):
        x = gen.standard_normal((16, 4))
        assert explained_variance(x, x) == 1.0

    def test_column_means(self, gen):
        x = gen.standard_normal((16, 4))
        x_hat = np.tile(x.mean(axis=0), (16, 1))
        assert abs(explained_variance(x, x_hat)) < 1e-12

    def test_direct_formula(self, gen):
        x, x_hat = gen.standard_normal((16, 4)), gen.standard_normal((16, 4))
        r = x - x_hat
        expected = 1 - ((r - r.mean(0)) ** 2).mean(0).sum() / ((x - x.mean(0)) ** 2).mean(0).sum()
        assert abs(explained_variance(x, x_hat) - expected) < 1e-12

    def test_constant_input(self):
        with pytest.raises(UndefinedInputError):
            explained_variance(np.ones((4, 2)), np.zeros((4, 2)))


# =============================================================================
# KL score
# =============================================================================
class TestKlScore:
    P_ORIG = [0.5, 0.5]
    P_ABL = [0.9, 0.1]

    def test_identical_is_one(self):
        assert kl_divergence_score(self.P_ORIG, self.P_ORIG, self.P_ABL) == 1.0

    def test_ablated_is_zero(self):
        assert kl_divergence_score(self.P_ORIG, self.P_ABL, self.P_ABL) == 0.0

    def test_hand_computation(self):
        kl_abl = 0.9 * math.log(0.9 / 0.5) + 0.1 * math.log(0.1 / 0.5)
        kl_sae = 0.7 * math.log(0.7 / 0.5) + 0.3 * math.log(0.3 / 0.5)
        expected = (kl_abl - kl_sae) / kl_abl
        assert kl_divergence_score(self.P_ORIG, [0.7, 0.3], self.P_ABL) == pytest.approx(expected, abs=1e-12)

    def test_zero_baseline(self):
        with pytest.raises(UndefinedBaselineError):
            kl_divergence_score(self.P_ORIG, [0.7, 0.3], self.P_ORIG)

    def test_infinite_baseline(self):
        # p_orig puts no mass on the second outcome
        with pytest.raises(UndefinedBaselineError):
            kl_divergence_score([1.0, 0.0], [1.0, 0.0], self.P_ORIG)

    def test_not_a_distribution(self):
        with pytest.raises(ValueError):
            kl_divergence_score([0.5, 0.6], self.P_ORIG, self.P_ABL)

    def test_kl_zero_terms(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


# =============================================================================
# Geometry
# =============================================================================
class TestMeanCosSim:
    def test_orthonormal(self):
        assert mean_cos_sim(np.eye(4)) == 0.0

    def test_identical_columns(self):
        assert mean_cos_sim(np.array([[1.0, 1.0], [0.0, 0.0]])) == 1.0

    def test_plane_triple(self):
        assert abs(mean_cos_sim(PLANE_TRIPLE) - math.sqrt(2) / 2) < 1e-12

    def test_needs_two_columns(self):
        with pytest.raises(ConfigurationError):
            mean_cos_sim(np.ones((3, 1)))

    def test_rescaling_and_permutation(self, gen):
        w = gen.standard_normal((8, 20))
        base = mean_cos_sim(w)
        assert mean_cos_sim(w * gen.uniform(0.5, 3.0, 20)) == pytest.approx(base, abs=1e-12)
        assert mean_cos_sim(w[:, gen.permutation(20)]) == pytest.approx(base, abs=1e-12)

    def test_nearest_table(self):
        table = nearest_cosine_table(PLANE_TRIPLE)
        assert list(table.columns) == ["feature_id", "max_cos"]
        assert np.allclose(table.max_cos, math.sqrt(2) / 2)


class TestClustering:
    def test_triangle(self):
        w = np.array([[1.0, 0.9, 0.9], [0.0, 0.1, -0.1], [0.0, 0.0, 0.1]])
        (density, coefficient), = clustering_coefficient(w, [0.5])
        assert density == 1.0 and coefficient == 1.0

    def test_path_graph(self):
        # a-b and b-c similar, a and c orthogonal
        w = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 1.0]])
        (density, coefficient), = clustering_coefficient(w, [0.5])
        assert density == pytest.approx(2 / 3)
        assert coefficient == 0.0

    def test_adjacency_cube_oracle(self, gen):
        w = gen.standard_normal((6, 12))
        cos = np.abs(w.T @ w) / np.outer(np.linalg.norm(w, axis=0), np.linalg.norm(w, axis=0))
        adj = (cos > 0.3).astype(float)
        np.fill_diagonal(adj, 0)
        triangles = np.trace(adj @ adj @ adj) / 6
        degrees = adj.sum(axis=1)
        triples = (degrees * (degrees - 1) / 2).sum()
        expected = 3 * triangles / triples if triples else 0.0
        (density, coefficient), = clustering_coefficient(w, [0.3])
        assert coefficient == pytest.approx(expected, abs=1e-12)
        assert density == pytest.approx(adj.sum() / (12 * 11), abs=1e-12)

    def test_density_non_increasing(self, gen):
        curve = clustering_coefficient(gen.standard_normal((6, 16)), DEFAULT_THRESHOLDS)
        densities = [d for d, _ in curve]
        assert len(curve) == 10
        assert all(a >= b for a, b in zip(densities, densities[1:]))
        assert all(0.0 <= c <= 1.0 for _, c in curve)

    def test_needs_three_columns(self):
        with pytest.raises(ConfigurationError):
            clustering_coefficient(np.eye(2), [0.1])


class TestUniqueFeatures:
    def test_self_comparison(self, gen):
        w = gen.standard_normal((8, 10))
        assert unique_features(w, w) == 0.0

    def test_disjoint_coordinates(self):
        eye = np.eye(8)
        assert unique_features(eye[:, :4], eye[:, 4:]) == 1.0

    def test_double_loop_oracle(self, gen):
        a, b = gen.standard_normal((6, 7)), gen.standard_normal((6, 9))
        unique = 0
        for i in range(7):
            if max(abs(cosine_sim(a[:, i], b[:, j], 1e-8)) for j in range(9)) < 0.2:
                unique += 1
        assert unique_features(a, b) == unique / 7


class TestGroundTruthMmcs:
    def test_contains_all_features(self, gen):
        world = default_world(0, n=8, num_features=12, composite_pairs=1, hierarchy_pairs=1)
        w_dec = np.concatenate([world.features, gen.standard_normal((8, 4))], axis=1)
        assert ground_truth_mmcs(world, w_dec) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        world = SyntheticWorld(features=np.eye(4)[:, :2], fire_prob=[0.1, 0.1])
        assert ground_truth_mmcs(world, np.eye(4)[:, 2:]) == 0.0

    def test_double_loop_oracle(self, gen):
        world = default_world(1, n=8, num_features=12, composite_pairs=1, hierarchy_pairs=1)
        w_dec = gen.standard_normal((8, 20))
        expected = np.mean([
            max(cosine_sim(world.features[:, f], w_dec[:, j], 1e-8) for j in range(20)) for f in range(12)
        ])
        assert ground_truth_mmcs(world, w_dec) == pytest.approx(expected, abs=1e-12)


# =============================================================================
# Decomposition
# =============================================================================
class TestDecomposition:
    def test_single_column(self, gen):
        w = gen.standard_normal((6, 10))
        target = 2.5 * w[:, 3] / np.linalg.norm(w[:, 3])
        result = decompose_feature(target, w)
        assert result is not None
        assert result.indices == [3]
        assert result.coefficients[0] == pytest.approx(2.5, abs=1e-9)

    def test_orthogonal_target_rejected(self):
        w = np.eye(6)[:, :3]
        assert decompose_feature(np.eye(6)[:, 5], w) is None

    def test_two_orthonormal_atoms(self):
        w = np.eye(6)[:, [0, 1, 2, 3]]
        target = 0.7 * w[:, 1] + 0.7 * w[:, 2]
        result = decompose_feature(target, w)
        assert result.indices == [1, 2]
        assert result.coefficients == pytest.approx([0.7, 0.7], abs=1e-12)

    def test_acceptance_implies_cosine(self, gen):
        w = gen.standard_normal((8, 24))
        w /= np.linalg.norm(w, axis=0)
        for trial in range(20):
            atoms = gen.choice(24, size=2, replace=False)
            target = w[:, atoms] @ gen.uniform(0.3, 1.0, 2)
            result = decompose_feature(target, w)
            if result is None:
                continue
            approx = w[:, result.indices] @ np.array(result.coefficients)
            assert cosine_sim(target, approx, 1e-8) > 0.95
            assert min(result.coefficients) >= 0.1
            assert len(result.indices) <= 5

    def test_dictionary_table(self):
        w_b = np.eye(6)[:, :4]
        w_a = np.stack([w_b[:, 0], 0.7 * w_b[:, 1] + 0.7 * w_b[:, 2], np.eye(6)[:, 5]], axis=1)
        table = decompose_dictionary(w_a, w_b)
        assert list(table.columns) == ["feature_id", "num_atoms", "atoms", "coefficients", "cosine"]
        assert table.feature_id.tolist() == [0, 1]
        assert table.atoms.tolist() == ["0", "1|2"]


# =============================================================================
# Report
# =============================================================================
class TestReport:
    def test_build_and_save(self, tmp_path):
        world = default_world(0, n=8, num_features=16, composite_pairs=2, hierarchy_pairs=2)
        cfg = SaeConfig(mode="batch_topk", dict_size=16, k_sparsity=2)
        params = init_params(8, 16, RngStream(seed=0))
        x, _ = sample_batch(world, 64, RngStream(seed=0))

        report = build_report(params, cfg, x, world=world, reference_w_dec=params.w_dec)
        assert report.explained_variance <= 1.0
        assert report.unique_fraction == 0.0
        assert 0.0 <= report.ground_truth_mmcs <= 1.0
        assert report.actual_l0 <= 2.0
        assert report.mean_cos_sim == mean_cos_sim(params.w_dec)

        paths = save_report(report, str(tmp_path), params.w_dec, cfg.delta)
        saved = pd.read_csv(paths["report"])
        assert saved.explained_variance[0] == pytest.approx(report.explained_variance, rel=1e-12)
        assert len(pd.read_csv(tmp_path / CLUSTERING_FILE)) == 10
        assert len(pd.read_csv(tmp_path / NEAREST_FILE)) == 16
        assert (tmp_path / REPORT_FILE).exists()

    def test_optional_fields(self, gen):
        cfg = SaeConfig(mode="topk", dict_size=6, k_sparsity=2)
        params = init_params(4, 6, RngStream(seed=1))
        report = build_report(params, cfg, gen.standard_normal((10, 4)))
        assert report.unique_fraction is None and report.ground_truth_mmcs is None
        assert report.to_frame().unique_fraction.isna().all()
