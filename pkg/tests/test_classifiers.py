import math

import numpy as np
import pytest

from embrich.classifiers import (
    ClassifierConfig,
    ClassifierModel,
    balanced_sample_weights,
    feature_importance,
    fit_classifier,
    gbt_fit,
    model_to_json,
    ordered_target_encode,
    predict_label,
    predict_proba,
    rf_fit,
)
from embrich.errors import ConfigError, SingleClassTraining, WidthMismatch


class TestRandomForest:
    def test_separable_data_trains_to_perfection(self, separable_1d):
        X, y = separable_1d
        config = ClassifierConfig(kind="random_forest", trees=100, class_weight="balanced")
        model = rf_fit(X, y, config)
        assert (predict_label(model, X) == y).mean() == 1.0

    def test_balanced_weights_equalize_classes(self):
        y = np.array([0] * 90 + [1] * 10)
        w = balanced_sample_weights(y, 2)
        assert w[y == 0].sum() == pytest.approx(w[y == 1].sum(), abs=1e-9)
        assert w.sum() == pytest.approx(len(y), abs=1e-9)

    def test_deterministic_given_seed(self, separable_1d):
        X, y = separable_1d
        probe = np.linspace(-4, 4, 21).reshape(-1, 1)
        config = ClassifierConfig(kind="random_forest", trees=25, seed=11)
        p1 = predict_proba(rf_fit(X, y, config), probe)
        p2 = predict_proba(rf_fit(X, y, config), probe)
        assert np.array_equal(p1, p2)

    def test_single_class_rejected(self):
        X = np.zeros((10, 2))
        with pytest.raises(SingleClassTraining):
            rf_fit(X, np.zeros(10, dtype=int), ClassifierConfig(kind="random_forest"))

    def test_forest_at_least_as_good_as_single_tree(self, separable_1d):
        X, y = separable_1d
        forest = rf_fit(X, y, ClassifierConfig(kind="random_forest", trees=100, seed=0))
        tree = rf_fit(X, y, ClassifierConfig(kind="random_forest", trees=1, seed=0))
        forest_acc = (predict_label(forest, X) == y).mean()
        tree_acc = (predict_label(tree, X) == y).mean()
        assert forest_acc >= tree_acc

    def test_kind_checked(self, separable_1d):
        X, y = separable_1d
        with pytest.raises(ConfigError):
            rf_fit(X, y, ClassifierConfig(kind="gbt"))


class TestGbt:
    def test_base_score_is_log_odds(self):
        X = np.arange(4, dtype=float).reshape(-1, 1)
        y = np.array([1, 1, 0, 1])
        model = gbt_fit(X, y, ClassifierConfig(kind="gbt", trees=1))
        assert model.base_score[0] == pytest.approx(math.log(3.0), abs=1e-9)

    def test_xor_learnable_at_depth_two(self, blob_xor):
        X, y = blob_xor
        config = ClassifierConfig(kind="gbt", trees=50, max_depth=2, learning_rate=0.1)
        model = gbt_fit(X, y, config)
        assert (predict_label(model, X) == y).mean() >= 0.98

    def test_training_logloss_non_increasing(self, blob_xor):
        X, y = blob_xor
        model = gbt_fit(X, y, ClassifierConfig(kind="gbt", trees=50, max_depth=2))
        losses = model.train_loss
        assert all(later <= earlier + 1e-12 for earlier, later in zip(losses, losses[1:]))

    def test_vanishing_learning_rate_keeps_base_prediction(self, blob_xor):
        X, y = blob_xor
        config = ClassifierConfig(kind="gbt", trees=5, max_depth=2, learning_rate=1e-12)
        model = gbt_fit(X, y, config)
        p = predict_proba(model, X)
        base = 1.0 / (1.0 + math.exp(-model.base_score[0]))
        assert np.abs(p[:, 1] - base).max() < 1e-9

    def test_zero_rounds_model_predicts_softmax_base(self):
        base = np.log(np.array([0.2, 0.3, 0.5]))
        model = ClassifierModel(
            config=ClassifierConfig(kind="gbt", trees=1),
            trees=(),
            base_score=base,
            feature_names=("f0",),
            importance=np.zeros(1),
            n_classes=3,
            n_features=1,
        )
        p = predict_proba(model, np.zeros((4, 1)))
        assert p == pytest.approx(np.tile([0.2, 0.3, 0.5], (4, 1)), abs=1e-9)

    def test_multiclass_learns_three_blobs(self):
        rng = np.random.default_rng(5)
        y = np.repeat([0, 1, 2], 40)
        X = rng.normal(size=(120, 2)) * 0.2
        X[:, 0] += (y == 1) * 3.0
        X[:, 1] += (y == 2) * 3.0
        model = gbt_fit(X, y, ClassifierConfig(kind="gbt", trees=20, max_depth=3))
        assert (predict_label(model, X) == y).mean() >= 0.99

    def test_single_class_rejected(self):
        with pytest.raises(SingleClassTraining):
            gbt_fit(np.zeros((5, 1)), np.ones(5, dtype=int), ClassifierConfig(kind="gbt"))


class TestOrderedTargetEncode:
    def test_hand_fixture_identity_permutation(self):
        out = ordered_target_encode(
            ["A", "A", "B", "A"], [1, 0, 1, 1], prior_weight=1.0,
            permutation=np.arange(4),
        )
        assert out == pytest.approx([0.75, 0.875, 0.75, 0.5833333333333334], abs=1e-9)

    def test_huge_prior_weight_pins_to_mean(self):
        y = np.array([1, 0, 1, 1, 0])
        out = ordered_target_encode(["a", "b", "a", "b", "a"], y, prior_weight=1e9, seed=0)
        assert np.abs(out - y.mean()).max() < 1e-6

    def test_deterministic(self):
        col = list("abcabcab")
        y = [0, 1, 0, 1, 1, 0, 1, 0]
        a = ordered_target_encode(col, y, 1.0, seed=5)
        b = ordered_target_encode(col, y, 1.0, seed=5)
        assert np.array_equal(a, b)

    def test_future_targets_never_leak(self):
        rng = np.random.default_rng(7)
        n = 30
        for _ in range(50):
            col = rng.choice(list("abcd"), size=n)
            y = rng.integers(0, 2, size=n).astype(float)
            perm = rng.permutation(n)
            base = ordered_target_encode(col, y, 1.0, permutation=perm, prior=0.5)
            i = int(rng.integers(0, n))
            y2 = y.copy()
            future = perm >= perm[i]
            y2[future] = 1.0 - y2[future]
            perturbed = ordered_target_encode(col, y2, 1.0, permutation=perm, prior=0.5)
            assert perturbed[i] == base[i]


class TestPredictProba:
    def test_rows_sum_to_one(self, blob_xor):
        X, y = blob_xor
        for kind in ("random_forest", "gbt"):
            model = fit_classifier(X, y, ClassifierConfig(kind=kind, trees=10, max_depth=4))
            p = predict_proba(model, X)
            assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-9

    def test_single_tree_pure_leaf_probability_one(self, separable_1d):
        X, y = separable_1d
        model = rf_fit(X, y, ClassifierConfig(kind="random_forest", trees=1, seed=2))
        p = predict_proba(model, X)
        assert p.max(axis=1).min() == 1.0

    def test_width_mismatch(self, separable_1d):
        X, y = separable_1d
        model = rf_fit(X, y, ClassifierConfig(kind="random_forest", trees=2))
        with pytest.raises(WidthMismatch):
            predict_proba(model, np.zeros((3, 9)))


class TestFeatureImportance:
    def test_never_split_feature_scores_zero(self, separable_1d):
        X, y = separable_1d
        X2 = np.hstack([X, np.zeros((len(y), 1))])  # constant second feature
        model = rf_fit(X2, y, ClassifierConfig(kind="random_forest", trees=20))
        assert feature_importance(model)[1] == 0.0

    def test_scores_sum_to_one(self, blob_xor):
        X, y = blob_xor
        model = gbt_fit(X, y, ClassifierConfig(kind="gbt", trees=10, max_depth=2))
        assert feature_importance(model).sum() == pytest.approx(1.0, abs=1e-9)

    def test_perfect_splitter_dominates(self, separable_1d):
        X, y = separable_1d
        noise = np.random.default_rng(0).normal(size=(len(y), 3)) * 0.01
        X2 = np.hstack([X, noise])
        config = ClassifierConfig(kind="random_forest", trees=50, subsample_features="all")
        model = rf_fit(X2, y, config)
        assert feature_importance(model)[0] >= 0.9


class TestOrderedTsClassifier:
    def test_categorical_columns_are_encoded_and_used(self):
        rng = np.random.default_rng(3)
        n = 200
        cat = rng.choice(["u", "v"], size=n)
        y = (cat == "u").astype(int)
        flip = rng.random(n) < 0.05
        y[flip] = 1 - y[flip]
        X = rng.normal(size=(n, 2))  # numeric features are pure noise
        config = ClassifierConfig(kind="gbt_ordered_ts", trees=20, max_depth=3, seed=1)
        model = fit_classifier(
            X, y, config, feature_names=("n0", "n1"), categorical=[("cat", list(cat))]
        )
        assert model.n_features == 3
        assert model.feature_names[-1] == "cat_ts"
        p = predict_proba(model, X, categorical=[("cat", list(cat))])
        assert ((p.argmax(axis=1)) == y).mean() >= 0.9

    def test_prediction_without_categorical_rejected(self):
        rng = np.random.default_rng(4)
        cat = rng.choice(["u", "v"], size=50)
        y = (cat == "u").astype(int)
        X = rng.normal(size=(50, 1))
        config = ClassifierConfig(kind="gbt_ordered_ts", trees=3, max_depth=2)
        model = fit_classifier(X, y, config, categorical=[("cat", list(cat))])
        with pytest.raises(WidthMismatch):
            predict_proba(model, X)


def test_model_json_dump(separable_1d):
    X, y = separable_1d
    model = rf_fit(X, y, ClassifierConfig(kind="random_forest", trees=3, seed=1))
    doc = model_to_json(model)
    assert set(doc) == {"config", "base_score", "trees", "importance", "feature_names"}
    assert len(doc["trees"]) == 3
    assert doc["trees"][0].keys() <= {"feature", "threshold", "left", "right", "leaf"}
