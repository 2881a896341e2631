import numpy as np
import pytest
from scipy import stats

from iwmc.data import DataError
from iwmc.evaluation import knn_predict
from iwmc.synth import (SynthConfig, ampute_mcar, ampute_mnar,
                        make_classification)


class TestMakeClassification:
    def test_shapes_and_balance(self):
        ds = make_classification(SynthConfig(
            n_samples=301, n_informative=10, n_noise=100, n_classes=2, seed=0))
        assert ds.X.shape == (301, 110)
        counts = np.bincount(ds.y)
        assert counts.tolist() in ([151, 150], [150, 151])
        assert len(ds.relevant_features) == 10

    def test_deterministic(self):
        cfg = SynthConfig(n_samples=50, n_informative=4, n_noise=6, seed=5)
        a, b = make_classification(cfg), make_classification(cfg)
        assert np.array_equal(a.X.values, b.X.values)
        assert np.array_equal(a.y, b.y)
        assert a.relevant_features == b.relevant_features

    def test_informative_columns_separate_classes(self):
        ds = make_classification(SynthConfig(
            n_samples=400, n_informative=5, n_noise=5,
            class_separation=2.0, seed=1))
        X = ds.X.values
        for j in ds.relevant_features:
            gap = abs(X[ds.y == 0, j].mean() - X[ds.y == 1, j].mean())
            assert gap > 2.0  # centers are 4 apart; sampling noise ~0.1

    def test_noise_columns_uninformative_and_scaled(self):
        ds = make_classification(SynthConfig(
            n_samples=2000, n_informative=3, n_noise=7,
            noise_variance=5.0, seed=2))
        X = ds.X.values
        noise_cols = sorted(set(range(10)) - set(ds.relevant_features))
        for j in noise_cols:
            assert 4.0 < X[:, j].var() < 6.0
            gap = abs(X[ds.y == 0, j].mean() - X[ds.y == 1, j].mean())
            assert gap < 0.3

    def test_informative_unit_within_class_variance(self):
        ds = make_classification(SynthConfig(
            n_samples=3000, n_informative=4, n_noise=0, seed=3))
        X = ds.X.values
        for j in ds.relevant_features:
            for c in (0, 1):
                assert 0.85 < X[ds.y == c, j].var() < 1.15

    def test_knn_separability(self):
        ds = make_classification(SynthConfig(
            n_samples=300, n_informative=10, n_noise=0, seed=4))
        half = 150
        X, y = ds.X.values, ds.y
        pred = knn_predict(X[:half], y[:half], X[half:], k=5)
        assert (pred == y[half:]).mean() > 0.9

    def test_multiclass_vertices_distinct(self):
        ds = make_classification(SynthConfig(
            n_samples=120, n_informative=6, n_classes=4, seed=6))
        X = ds.X.values
        centers = np.array([X[ds.y == c].mean(axis=0) for c in range(4)])
        for a in range(4):
            for b in range(a + 1, 4):
                assert np.abs(centers[a] - centers[b]).max() > 1.0

    def test_too_many_classes(self):
        with pytest.raises(DataError):
            make_classification(SynthConfig(
                n_samples=40, n_informative=2, n_classes=5, seed=0))

    def test_bad_config(self):
        with pytest.raises(DataError):
            SynthConfig(n_samples=0)
        with pytest.raises(DataError):
            SynthConfig(n_classes=1)
        with pytest.raises(DataError):
            SynthConfig(noise_variance=0.0)


class TestAmputeMcar:
    def test_exact_count_flagship_setting(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((300, 110))
        out = ampute_mcar(X, 0.10, seed=1)
        assert int((~out.observed_mask).sum()) == 3300

    @pytest.mark.parametrize("rate", [0.0, 0.05, 0.2, 0.5])
    def test_exact_count_general(self, rate):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((40, 7))
        out = ampute_mcar(X, rate, seed=2)
        assert int((~out.observed_mask).sum()) == round(rate * 40 * 7)

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 5))
        a = ampute_mcar(X, 0.2, seed=3)
        b = ampute_mcar(X, 0.2, seed=3)
        assert np.array_equal(a.observed_mask, b.observed_mask)

    def test_values_untouched_where_observed(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((25, 6))
        out = ampute_mcar(X, 0.3, seed=4)
        assert np.array_equal(out.values[out.observed_mask], X[out.observed_mask])

    def test_every_column_observed(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((10, 8))
        out = ampute_mcar(X, 0.6, seed=5)
        assert out.observed_mask.any(axis=0).all()

    def test_value_independence_two_sample(self):
        # masked and observed values should come from the same distribution
        rng = np.random.default_rng(5)
        X = rng.standard_normal((200, 20))
        out = ampute_mcar(X, 0.25, seed=6)
        masked_vals = X[~out.observed_mask]
        obs_vals = X[out.observed_mask]
        _, p = stats.ks_2samp(masked_vals, obs_vals)
        assert p > 0.01

    def test_bad_rate(self):
        with pytest.raises(DataError):
            ampute_mcar(np.ones((3, 3)), 1.0, seed=0)
        with pytest.raises(DataError):
            ampute_mcar(np.ones((3, 3)), -0.1, seed=0)


class TestAmputeMnar:
    def test_rate_within_tolerance(self):
        rng = np.random.default_rng(6)
        X = rng.standard_normal((300, 110))
        out = ampute_mnar(X, 0.10, seed=7)
        achieved = (~out.observed_mask).mean()
        assert abs(achieved - 0.10) <= 0.005

    def test_upper_tail_masked(self):
        # in every column that lost cells, masked values sit above the
        # column's observed values (up to the repair swap)
        rng = np.random.default_rng(7)
        X = rng.standard_normal((200, 10))
        out = ampute_mnar(X, 0.15, seed=8)
        mask = out.observed_mask
        violations = 0
        for q in range(10):
            mis = ~mask[:, q]
            if not mis.any():
                continue
            if X[mis, q].min() < np.median(X[mask[:, q], q]):
                violations += 1
        assert violations <= 1

    def test_roughly_half_columns_affected(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((150, 12))
        out = ampute_mnar(X, 0.2, seed=9)
        affected = (~out.observed_mask).any(axis=0).sum()
        assert affected <= 6

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((80, 8))
        a = ampute_mnar(X, 0.1, seed=10)
        b = ampute_mnar(X, 0.1, seed=10)
        assert np.array_equal(a.observed_mask, b.observed_mask)

    def test_zero_rate(self):
        X = np.random.default_rng(10).standard_normal((20, 4))
        out = ampute_mnar(X, 0.0, seed=11)
        assert out.observed_mask.all()

    def test_bad_rate(self):
        with pytest.raises(DataError):
            ampute_mnar(np.ones((3, 3)), 1.0, seed=0)
