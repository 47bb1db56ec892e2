"""Tests for NRMSE, NMAE, normalised GINI and AUC."""

import itertools

import numpy as np
import pytest

from htgnn_ltv.evaluation.metrics import auc, average_ranks, gini, nmae, normalized_gini, nrmse
from htgnn_ltv.utils.exceptions import MetricUndefinedError


def _lorenz_gini(y: np.ndarray, scores: np.ndarray) -> float:
    """Gini of a tie-free ordering by direct summation of the cumulative curve."""
    order = sorted(range(len(y)), key=lambda i: -scores[i])
    n, total, running, area = len(y), y.sum(), 0.0, 0.0
    for i in order:
        running += y[i]
        area += running / total
    return area / n - (n + 1) / (2.0 * n)


def _pair_count_auc(labels: np.ndarray, scores: np.ndarray) -> float:
    pos, neg = scores[labels == 1], scores[labels == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


class TestNormalisedErrors:
    def test_perfect_prediction(self, rng):
        y = rng.gamma(1.0, 3.0, size=20)
        assert nrmse(y, y) == 0.0
        assert nmae(y, y) == 0.0

    def test_zero_prediction_of_constant_label(self):
        y = np.full(7, 4.2)
        assert nrmse(y, np.zeros(7)) == pytest.approx(1.0)
        assert nmae(y, np.zeros(7)) == pytest.approx(1.0)

    def test_direct_formula(self, rng):
        y, y_hat = rng.gamma(1.0, 3.0, size=30), rng.gamma(1.0, 3.0, size=30)
        assert nrmse(y, y_hat) == pytest.approx(np.sqrt(np.mean((y - y_hat) ** 2)) / y.mean(), rel=1e-12)
        assert nmae(y, y_hat) == pytest.approx(np.mean(np.abs(y - y_hat)) / y.mean(), rel=1e-12)

    def test_scale_equivariance(self, rng):
        y, y_hat = rng.gamma(1.0, 3.0, size=30), rng.gamma(1.0, 3.0, size=30)
        assert nrmse(7.5 * y, 7.5 * y_hat) == pytest.approx(nrmse(y, y_hat), rel=1e-12)
        assert nmae(7.5 * y, 7.5 * y_hat) == pytest.approx(nmae(y, y_hat), rel=1e-12)

    def test_zero_mean_label(self):
        with pytest.raises(MetricUndefinedError):
            nrmse(np.zeros(3), np.ones(3))
        with pytest.raises(MetricUndefinedError):
            nmae(np.zeros(0), np.zeros(0))

    def test_length_mismatch(self):
        with pytest.raises(MetricUndefinedError):
            nrmse([1.0, 2.0], [1.0])


class TestNormalisedGini:
    def test_perfect_ranking(self, rng):
        y = rng.gamma(0.5, 10.0, size=50)
        assert normalized_gini(y, y) == pytest.approx(1.0, abs=1e-12)

    def test_constant_scores(self, rng):
        y = rng.gamma(0.5, 10.0, size=50)
        assert normalized_gini(y, np.full(50, 3.0)) == pytest.approx(0.0, abs=1e-12)

    def test_reversed_ranking_is_negative(self):
        y = np.array([1.0, 2.0, 3.0, 10.0])
        assert normalized_gini(y, -y) < 0.0

    def test_matches_cumulative_curve(self, rng):
        for _ in range(10):
            y, scores = rng.gamma(1.0, 2.0, size=5), rng.normal(size=5)
            assert gini(y, scores) == pytest.approx(_lorenz_gini(y, scores), abs=1e-12)
            assert normalized_gini(y, scores) == pytest.approx(_lorenz_gini(y, scores) / _lorenz_gini(y, y), abs=1e-12)

    def test_ties_average_over_orderings(self):
        y = np.array([5.0, 1.0, 0.0, 2.0, 7.0])
        scores = np.array([0.9, 0.4, 0.4, 0.4, 0.1])
        tied = [1, 2, 3]
        values = []
        for perm in itertools.permutations(tied):
            broken = scores.copy()
            broken[list(perm)] = [0.5, 0.4, 0.3]
            values.append(_lorenz_gini(y, broken))
        assert gini(y, scores) == pytest.approx(np.mean(values), abs=1e-12)

    def test_monotone_transform_invariance(self, rng):
        y, scores = rng.gamma(1.0, 2.0, size=40), rng.normal(size=40)
        assert normalized_gini(y, np.exp(scores)) == pytest.approx(normalized_gini(y, scores), abs=1e-12)

    def test_undefined_cases(self):
        with pytest.raises(MetricUndefinedError):
            normalized_gini(np.zeros(4), np.arange(4.0))
        with pytest.raises(MetricUndefinedError):
            normalized_gini([3.0], [1.0])
        with pytest.raises(MetricUndefinedError):
            normalized_gini(np.full(4, 2.0), np.arange(4.0))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0

    def test_constant_scores(self):
        assert auc([0, 1, 0, 1, 1], np.full(5, 0.3)) == 0.5

    def test_matches_pair_count(self, rng):
        labels = (rng.uniform(size=30) < 0.4).astype(float)
        labels[:2] = [0.0, 1.0]
        scores = np.round(rng.uniform(size=30), 1)
        assert auc(labels, scores) == pytest.approx(_pair_count_auc(labels, scores), abs=1e-12)

    def test_complemented_labels(self, rng):
        labels = np.array([0, 1, 1, 0, 1, 0, 0, 1], dtype=float)
        scores = rng.normal(size=8)
        assert auc(1 - labels, scores) == pytest.approx(1 - auc(labels, scores), abs=1e-12)
        assert auc(labels, scores**3) == pytest.approx(auc(labels, scores), abs=1e-12)

    def test_single_class(self):
        with pytest.raises(MetricUndefinedError):
            auc([1, 1, 1], [0.1, 0.2, 0.3])

    def test_average_ranks(self):
        np.testing.assert_array_equal(average_ranks([3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0])
