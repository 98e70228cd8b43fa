import math

import numpy as np
import pytest

from goya.errors import ConfigError, DataError, DegenerateInputError, ShapeError
from goya.metrics import (
    ConfusionMatrix,
    LinearProbe,
    ProbeConfig,
    _dcov_sq,
    distance_correlation,
    distance_correlation_subsampled,
    double_center,
    evaluate_probe,
    pairwise_euclidean,
    precision_at_k,
    rank_neighbors,
    retrieve_topk,
    train_probe,
)
from oracles import brute_force_distance_correlation


class TestPairwiseEuclidean:
    def test_hand_values(self):
        x = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
        d = pairwise_euclidean(x)
        assert d[0, 1] == 5.0
        assert d[0, 2] == 1.0
        assert d[1, 2] == pytest.approx(math.dist((3, 4), (0, 1)), rel=1e-12)

    def test_symmetric_zero_diagonal(self, rng):
        d = pairwise_euclidean(rng.normal(size=(15, 4)))
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0.0)
        assert np.all(d >= 0.0)

    def test_matches_direct_formula(self, rng):
        x = rng.normal(size=(10, 3))
        direct = np.array([[math.dist(a, b) for b in x] for a in x])
        np.testing.assert_allclose(pairwise_euclidean(x), direct, atol=1e-10)

    def test_rejects_1d(self):
        with pytest.raises(ShapeError):
            pairwise_euclidean(np.zeros(4))


class TestDoubleCenter:
    def test_hand_2x2(self):
        centered = double_center(np.array([[0.0, 2.0], [2.0, 0.0]]))
        assert centered.tolist() == [[-1.0, 1.0], [1.0, -1.0]]

    def test_rows_and_columns_sum_to_zero(self, rng):
        q = double_center(rng.normal(size=(9, 9)))
        np.testing.assert_allclose(q.sum(axis=0), 0.0, atol=1e-10)
        np.testing.assert_allclose(q.sum(axis=1), 0.0, atol=1e-10)

    def test_constant_matrix_centers_to_zero(self):
        np.testing.assert_allclose(double_center(np.full((4, 4), 7.3)), 0.0, atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(ShapeError):
            double_center(np.zeros((3, 4)))


class TestDistanceCorrelation:
    @pytest.mark.parametrize("n,d,seed", [(5, 2, 0), (8, 3, 1), (12, 4, 2), (20, 6, 3)])
    def test_matches_brute_force(self, n, d, seed):
        r = np.random.default_rng(seed)
        x, y = r.normal(size=(n, d)), r.normal(size=(n, d + 1))
        assert distance_correlation(x, y) == pytest.approx(
            brute_force_distance_correlation(x, y), abs=1e-10)

    def test_self_correlation_is_one(self, rng):
        x = rng.normal(size=(30, 5))
        assert distance_correlation(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_affine_image_is_one(self, rng):
        x = rng.normal(size=(25, 4))
        assert distance_correlation(x, 2.0 * x + 1.0) == pytest.approx(1.0, abs=1e-9)

    def test_isometry_invariance(self):
        r = np.random.default_rng(5)
        x, y = r.normal(size=(40, 6)), r.normal(size=(40, 6))
        q, _ = np.linalg.qr(r.normal(size=(6, 6)))
        base = distance_correlation(x, y)
        assert distance_correlation(x @ q + r.normal(size=6), y) == pytest.approx(
            base, abs=1e-8)

    def test_symmetric_in_arguments(self, rng):
        x, y = rng.normal(size=(20, 3)), rng.normal(size=(20, 5))
        assert distance_correlation(x, y) == pytest.approx(
            distance_correlation(y, x), abs=1e-12)

    def test_range(self, rng):
        for _ in range(5):
            x, y = rng.normal(size=(15, 3)), rng.normal(size=(15, 3))
            v = distance_correlation(x, y)
            assert -1e-12 <= v <= 1.0 + 1e-12

    def test_independent_gaussians_score_low(self):
        # frozen determinism pin for n=1000, d=16, seed 2024
        r = np.random.default_rng(2024)
        a, b = r.normal(size=(1000, 16)), r.normal(size=(1000, 16))
        v = distance_correlation(a, b)
        assert v == pytest.approx(0.24174614839238018, abs=1e-9)
        assert 0.0 < v < 0.3

    def test_constant_side_rejected(self, rng):
        x = rng.normal(size=(6, 3))
        with pytest.raises(DegenerateInputError):
            distance_correlation(x, np.ones((6, 2)))

    def test_too_few_rows_rejected(self):
        with pytest.raises(ShapeError):
            distance_correlation(np.zeros((1, 2)), np.zeros((1, 2)))

    def test_row_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            distance_correlation(rng.normal(size=(5, 2)), rng.normal(size=(6, 2)))

    def test_negative_roundoff_clamped_with_warning(self):
        q = np.array([[1.0, -1.0], [-1.0, 1.0]])
        with pytest.warns(RuntimeWarning, match="clamped"):
            assert _dcov_sq(q, -q, 2) == 0.0


class TestSubsampling:
    def test_small_input_used_whole(self, rng):
        a, b = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
        v, n_used = distance_correlation_subsampled(a, b, max_n=100)
        assert n_used == 50
        assert v == distance_correlation(a, b)

    def test_large_input_capped_and_deterministic(self, rng):
        a, b = rng.normal(size=(500, 4)), rng.normal(size=(500, 4))
        v1, n1 = distance_correlation_subsampled(a, b, max_n=100, rng_seed=3)
        v2, n2 = distance_correlation_subsampled(a, b, max_n=100, rng_seed=3)
        v3, _ = distance_correlation_subsampled(a, b, max_n=100, rng_seed=4)
        assert (n1, n2) == (100, 100)
        assert v1 == v2
        assert v1 != v3

    def test_rows_stay_aligned_under_subsampling(self, rng):
        # identical matrices must still score 1 after row selection
        a = rng.normal(size=(300, 4))
        v, _ = distance_correlation_subsampled(a, a, max_n=64, rng_seed=1)
        assert v == pytest.approx(1.0, abs=1e-9)

    def test_max_n_validated(self, rng):
        with pytest.raises(ConfigError):
            distance_correlation_subsampled(rng.normal(size=(5, 2)),
                                            rng.normal(size=(5, 2)), max_n=1)


def blobs(seed=9, n=300, scale=0.3):
    r = np.random.default_rng(seed)
    centers = np.array([[4.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]])
    labels = r.integers(0, 3, size=n)
    x = centers[labels] + scale * r.normal(size=(n, 3))
    return x, labels


class TestProbe:
    def test_config_defaults(self):
        cfg = ProbeConfig()
        assert (cfg.lr, cfg.momentum, cfg.epochs, cfg.batch_size) == (0.02, 0.9, 90, 4096)
        assert cfg.schedule == "cosine"

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ProbeConfig(lr=0.0)
        with pytest.raises(ConfigError):
            ProbeConfig(momentum=1.0)
        with pytest.raises(ConfigError):
            ProbeConfig(schedule="step")
        with pytest.raises(ConfigError, match="nesterov"):
            ProbeConfig.from_dict({"nesterov": True})

    def test_separable_blobs_reach_full_accuracy(self):
        x, labels = blobs()
        probe = train_probe(x, labels, 3, ProbeConfig(epochs=30, batch_size=64))
        assert evaluate_probe(probe, x, labels).accuracy == 1.0

    def test_shuffled_labels_score_near_chance(self):
        x, labels = blobs()
        shuffled = np.random.default_rng(1).permutation(labels)
        probe = train_probe(x, shuffled, 3, ProbeConfig(epochs=30, batch_size=64))
        accuracy = evaluate_probe(probe, x, shuffled).accuracy
        assert 0.2 < accuracy < 0.55

    def test_training_matrix_not_mutated(self):
        x, labels = blobs(n=60)
        before = x.tobytes()
        train_probe(x, labels, 3, ProbeConfig(epochs=5, batch_size=16))
        assert x.tobytes() == before

    def test_deterministic_given_seed(self):
        x, labels = blobs(n=60)
        cfg = ProbeConfig(epochs=5, batch_size=16)
        a = train_probe(x, labels, 3, cfg, rng_seed=7)
        b = train_probe(x, labels, 3, cfg, rng_seed=7)
        assert np.array_equal(a.weight, b.weight)
        assert np.array_equal(a.bias, b.bias)

    def test_single_class_rejected(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(DegenerateInputError):
            train_probe(x, np.zeros(10, dtype=int), 3)

    def test_label_range_checked(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        labels = np.array([0, 1, 2, 3, 0, 1, 2, 3, 0, 1])
        with pytest.raises(DataError):
            train_probe(x, labels, 3)

    def test_unused_class_allowed(self):
        # n_classes may exceed the labels actually present
        x, labels = blobs(n=60)
        probe = train_probe(x, labels, 5, ProbeConfig(epochs=5, batch_size=16))
        assert probe.n_classes == 5

    def test_probe_shape_check(self):
        probe = LinearProbe(weight=np.zeros((3, 4)), bias=np.zeros(3))
        with pytest.raises(ShapeError):
            probe.logits(np.zeros((2, 5)))


class TestConfusion:
    def test_counts_and_identities(self):
        probe = LinearProbe(weight=np.eye(3), bias=np.zeros(3))
        x = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        labels = np.array([0, 1, 1, 2])
        ev = evaluate_probe(probe, x, labels)
        assert ev.confusion.counts.tolist() == [[1, 0, 0], [1, 1, 0], [0, 0, 1]]
        assert ev.accuracy == pytest.approx(np.trace(ev.confusion.counts) / 4)
        assert ev.confusion.counts.sum() == 4
        assert ev.confusion.counts[1].sum() == 2  # row sums = true-class counts

    def test_per_class_accuracy_nan_for_absent(self):
        cm = ConfusionMatrix(np.array([[2, 0, 0], [1, 1, 0], [0, 0, 0]]))
        pca = cm.per_class_accuracy()
        assert pca[0] == 1.0 and pca[1] == 0.5 and np.isnan(pca[2])
        assert cm.normalized()[2].tolist() == [0.0, 0.0, 0.0]

    def test_csv_layout(self, tmp_path):
        cm = ConfusionMatrix(np.array([[2, 1], [0, 3]]))
        path = tmp_path / "cm.csv"
        cm.write_csv(path, class_names=["cat", "dog"])
        lines = path.read_text().splitlines()
        assert lines == ["true\\pred,cat,dog", "cat,2,1", "dog,0,3"]
        with pytest.raises(ShapeError):
            cm.write_csv(path, class_names=["only-one"])

    def test_empty_eval_rejected(self):
        probe = LinearProbe(weight=np.eye(2), bias=np.zeros(2))
        with pytest.raises(ShapeError):
            evaluate_probe(probe, np.zeros((0, 2)), np.zeros(0, dtype=int))


class TestRetrieval:
    def test_hand_example(self):
        db = np.array([[1.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
        idx, sims = retrieve_topk(np.array([1.0, 0.0]), db, k=2)
        assert idx.tolist() == [0, 1]
        assert sims[0] == pytest.approx(1.0, abs=1e-12)
        assert sims[1] == 0.6

    def test_full_k_is_a_permutation(self, rng):
        db = rng.normal(size=(12, 4))
        idx, sims = retrieve_topk(rng.normal(size=4), db, k=12)
        assert sorted(idx.tolist()) == list(range(12))
        assert np.all(np.diff(sims) <= 1e-15)

    def test_ties_broken_by_ascending_index(self):
        db = np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 0.0], [4.0, 0.0]])
        idx, sims = retrieve_topk(np.array([1.0, 0.0]), db, k=3)
        # rows 0, 2, 3 all have similarity exactly 1.0
        assert idx.tolist() == [0, 2, 3]
        assert np.all(sims == 1.0)

    def test_k_bounds(self, rng):
        db = rng.normal(size=(4, 2))
        with pytest.raises(ConfigError):
            retrieve_topk(np.ones(2), db, k=0)
        with pytest.raises(ConfigError):
            retrieve_topk(np.ones(2), db, k=5)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            retrieve_topk(np.zeros(2), np.eye(2), k=1)

    def test_rank_neighbors_excludes_self(self, rng):
        db = rng.normal(size=(8, 3))
        ranks = rank_neighbors(db, k=7)
        for i in range(8):
            assert i not in ranks[i]
            assert sorted(ranks[i].tolist()) == sorted(set(range(8)) - {i})

    def test_rank_neighbors_matches_topk_without_self(self, rng):
        db = rng.normal(size=(9, 4))
        ranks = rank_neighbors(db, k=3)
        for i in range(9):
            idx, _ = retrieve_topk(db[i], db, k=4)
            expect = [j for j in idx.tolist() if j != i][:3]
            assert ranks[i].tolist() == expect


class TestPrecisionAtK:
    def test_perfect_clusters(self):
        rankings = np.array([[1, 2], [0, 2], [0, 1], [4, 5], [3, 5], [3, 4]])
        labels = np.array([0, 0, 0, 1, 1, 1])
        assert precision_at_k(rankings, labels, k=2) == 1.0

    def test_hand_mixed_case(self):
        rankings = np.array([[1, 2], [0, 2], [0, 1]])
        labels = np.array([0, 1, 0])
        # hits per row at k=2: 1 of 2, 0 of 2, 1 of 2 -> mean 1/3
        assert precision_at_k(rankings, labels, k=2) == pytest.approx(1.0 / 3.0)
        # at k=1 only row 2's first neighbor shares its label
        assert precision_at_k(rankings, labels, k=1) == pytest.approx(1.0 / 3.0)

    def test_single_label_always_one(self, rng):
        ranks = rank_neighbors(rng.normal(size=(6, 3)), k=5)
        assert precision_at_k(ranks, np.zeros(6, dtype=int), k=5) == 1.0

    def test_k_validated(self):
        with pytest.raises(ConfigError):
            precision_at_k(np.zeros((3, 2), dtype=int), np.zeros(3, dtype=int), k=3)

    def test_shape_validated(self):
        with pytest.raises(ShapeError):
            precision_at_k(np.zeros((3, 2), dtype=int), np.zeros(4, dtype=int), k=1)
