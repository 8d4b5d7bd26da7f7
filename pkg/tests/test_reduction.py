import math

import numpy as np
import pytest

from embrich.data import LabelVector
from embrich.errors import InvalidD, PerplexityTooLarge, TooFewPoints, WidthMismatch
from embrich.reduction import (
    pca_fit,
    pca_inverse_transform,
    pca_model_from_json,
    pca_model_to_json,
    pca_transform,
    select_top_features,
    tsne_embed,
)


def _random_matrix(n=40, d=6, seed=1):
    return np.random.default_rng(seed).normal(size=(n, d))


class TestPcaFit:
    def test_collinear_fixture(self):
        X = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        model = pca_fit(X, 1)
        root_half = 1.0 / math.sqrt(2.0)
        assert model.components[0] == pytest.approx([root_half, root_half], abs=1e-8)
        share = model.explained_variance[0] / model.explained_variance.sum()
        assert share == pytest.approx(1.0, abs=1e-12)

    def test_full_rank_round_trip(self):
        X = _random_matrix()
        model = pca_fit(X, X.shape[1])
        Z = pca_transform(model, X)
        back = pca_inverse_transform(model, Z)
        assert np.abs(back - X).max() < 1e-8

    def test_d_out_of_range(self):
        X = _random_matrix(n=5, d=8)
        with pytest.raises(InvalidD):
            pca_fit(X, 5)  # d > n - 1
        with pytest.raises(InvalidD):
            pca_fit(X, 0)

    def test_sign_convention(self):
        X = _random_matrix()
        model = pca_fit(X, 3)
        for row in model.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_components_orthonormal(self):
        model = pca_fit(_random_matrix(), 4)
        gram = model.components @ model.components.T
        assert np.abs(gram - np.eye(4)).max() < 1e-8

    def test_explained_variance_non_increasing_and_bounded(self):
        X = _random_matrix(n=60, d=10, seed=3)
        model = pca_fit(X, 10)
        ev = model.explained_variance
        assert all(a >= b - 1e-12 for a, b in zip(ev, ev[1:]))
        total = X.var(axis=0, ddof=1).sum()
        assert ev.sum() <= total * (1 + 1e-6)

    def test_deterministic(self):
        X = _random_matrix()
        a, b = pca_fit(X, 3), pca_fit(X, 3)
        assert np.array_equal(a.components, b.components)


class TestPcaTransform:
    def test_mean_row_maps_to_zero(self):
        X = _random_matrix()
        model = pca_fit(X, 3)
        out = pca_transform(model, model.mean.reshape(1, -1))
        assert np.abs(out).max() < 1e-12

    def test_width_mismatch(self):
        model = pca_fit(_random_matrix(), 2)
        with pytest.raises(WidthMismatch):
            pca_transform(model, np.zeros((3, 7)))
        with pytest.raises(WidthMismatch):
            pca_inverse_transform(model, np.zeros((3, 3)))

    def test_transformed_covariance_diagonal(self):
        X = _random_matrix(n=80, d=8, seed=5)
        Z = pca_transform(pca_fit(X, 8), X)
        cov = np.cov(Z, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 1e-6

    def test_json_round_trip(self):
        model = pca_fit(_random_matrix(), 3)
        clone = pca_model_from_json(pca_model_to_json(model))
        assert np.array_equal(clone.components, model.components)
        assert np.array_equal(clone.mean, model.mean)


class TestSelectTopFeatures:
    def _labels(self, values):
        return LabelVector(values=np.asarray(values), class_names=("a", "b"))

    def test_perfect_column_ranks_first(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, size=80)
        X = np.zeros((80, 5))
        X[:, 2] = y * 2.0 - 1.0  # only informative, others constant
        ranking = select_top_features(X, self._labels(y), m=3, seed=0)
        assert ranking.selected_indices[0] == 2
        constant = [0, 1, 3, 4]
        assert all(ranking.scores[j] == 0.0 for j in constant)

    def test_m_clamped_to_width(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 2, size=60)
        X = rng.normal(size=(60, 4))
        ranking = select_top_features(X, self._labels(y), m=10, seed=0)
        assert len(ranking.selected_indices) == 4

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        y = rng.integers(0, 2, size=60)
        X = rng.normal(size=(60, 6))
        a = select_top_features(X, self._labels(y), 3, seed=9)
        b = select_top_features(X, self._labels(y), 3, seed=9)
        assert a.selected_indices == b.selected_indices
        assert np.array_equal(a.scores, b.scores)

    def test_scores_sum_to_one_and_selection_dominates(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 2, size=100)
        X = rng.normal(size=(100, 8))
        X[:, 1] += y  # make one column informative
        ranking = select_top_features(X, self._labels(y), 3, seed=1)
        assert ranking.scores.sum() == pytest.approx(1.0, abs=1e-9)
        floor = min(ranking.scores[j] for j in ranking.selected_indices)
        others = [s for j, s in enumerate(ranking.scores) if j not in ranking.selected_indices]
        assert all(floor >= s for s in others)


class TestTsne:
    def test_two_cluster_separation(self, two_clusters_64d):
        X, labels = two_clusters_64d
        Y = tsne_embed(X, perplexity=15, iterations=1000, seed=1)
        a, b = Y[labels == 0], Y[labels == 1]
        gap = np.linalg.norm(a.mean(0) - b.mean(0))
        radius = 0.5 * (
            np.linalg.norm(a - a.mean(0), axis=1).mean()
            + np.linalg.norm(b - b.mean(0), axis=1).mean()
        )
        assert gap > 3.0 * radius

    def test_perplexity_guard(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        with pytest.raises(PerplexityTooLarge):
            tsne_embed(X, perplexity=5)

    def test_too_few_points(self):
        X = np.random.default_rng(0).normal(size=(5, 4))
        with pytest.raises(TooFewPoints):
            tsne_embed(X, perplexity=1)

    def test_shape_and_finiteness(self):
        X = np.random.default_rng(1).normal(size=(30, 6))
        Y = tsne_embed(X, perplexity=8, iterations=300, seed=0)
        assert Y.shape == (30, 2)
        assert np.isfinite(Y).all()

    def test_deterministic(self):
        X = np.random.default_rng(2).normal(size=(24, 5))
        a = tsne_embed(X, perplexity=6, iterations=250, seed=4)
        b = tsne_embed(X, perplexity=6, iterations=250, seed=4)
        assert np.array_equal(a, b)

    def test_kl_non_increasing_tail(self, two_clusters_64d):
        X, _ = two_clusters_64d
        _, kl = tsne_embed(X, perplexity=15, iterations=1000, seed=1, return_kl=True)
        tail = kl[-100:]
        worst = max(later - earlier for earlier, later in zip(tail, tail[1:]))
        assert worst <= 1e-3

    def test_perplexity_matched(self, two_clusters_64d):
        # the realized perplexity of each conditional distribution hits the target
        from embrich.reduction import _conditional_probabilities

        X, _ = two_clusters_64d
        norms = (X**2).sum(axis=1)
        sq = np.maximum(norms[:, None] + norms[None, :] - 2 * X @ X.T, 0)
        P = _conditional_probabilities(sq, 15.0)
        for i in range(0, 100, 17):
            row = np.delete(P[i], i)
            nz = row[row > 0]
            entropy = -(nz * np.log(nz)).sum() / np.log(2.0)
            assert 2.0**entropy == pytest.approx(15.0, abs=1e-4)
