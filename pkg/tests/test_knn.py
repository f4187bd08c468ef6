import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saccadeconv.analysis import FEATURE_NAMES, FeatureVector
from saccadeconv.knn import (
    KnnModel,
    UndefinedFeatureError,
    balanced_accuracy,
    evaluate,
    knn_classify,
)


def fv(**kw):
    base = dict(zip(FEATURE_NAMES, [0.0] * len(FEATURE_NAMES)))
    base.update(kw)
    return FeatureVector(**base)


def model(points, labels, k):
    return KnnModel(k, ("mean_x",), np.array(points, float).reshape(-1, 1), labels)


class TestClassify:
    def test_k1_exact_match(self):
        m = model([0, 5, 9], ["a", "b", "c"], 1)
        assert knn_classify(m, [5.0]) == "b"

    def test_single_class(self):
        m = model([1, 2, 3, 50], ["z"] * 4, 3)
        assert knn_classify(m, [100.0]) == "z"

    def test_majority(self):
        m = model([0, 1, 2], ["a", "b", "b"], 3)
        assert knn_classify(m, [0.0]) == "b"

    def test_tie_smaller_distance(self):
        m = model([0, 3, 10, 11], ["a", "b", "a", "b"], 2)
        # neighbours of 1: a@0 (1), b@3 (2) -> 1-1 vote, a is closer
        assert knn_classify(m, [1.0]) == "a"

    def test_tie_label_order(self):
        m = model([-1, 1], ["b", "a"], 2)
        assert knn_classify(m, [0.0]) == "a"

    def test_numeric_label_order(self):
        m = model([-1, 1], [10, 9], 2)
        assert knn_classify(m, [0.0]) == 9

    def test_multi_feature_euclidean(self):
        m = KnnModel(1, ("mean_x", "mean_y"), np.array([[0, 0], [3, 4.1]]), ["o", "p"])
        assert knn_classify(m, [2.9, 4.0]) == "p"
        assert knn_classify(m, [1.0, 1.0]) == "o"

    def test_undefined_refused(self):
        m = model([0, 1], ["a", "b"], 1)
        with pytest.raises(UndefinedFeatureError):
            knn_classify(m, [math.nan])

    def test_invalid_model(self):
        with pytest.raises(ValueError):
            model([0], ["a"], 0)
        with pytest.raises(ValueError):
            KnnModel(1, ("bogus",), np.zeros((1, 1)), ["a"])

    def test_fit_drops_undefined(self):
        vecs = [fv(mean_x=1.0), fv(mean_x=math.nan), fv(mean_x=3.0)]
        m = KnnModel.fit(vecs, ["a", "b", "c"], "mean_x", k=1)
        assert m.labels == ("a", "c")

    @settings(max_examples=30)
    @given(st.integers(0, 10_000), st.integers(-6, 6))
    def test_scaling_invariance(self, seed, exp):
        # powers of two scale exactly in floating point
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(40, 2))
        labels = list(rng.integers(0, 4, 40))
        m = KnnModel(5, ("mean_x", "std_y"), pts, labels)
        c = 2.0**exp
        sm = m.scaled(c)
        for q in rng.normal(size=(20, 2)):
            assert knn_classify(m, q) == knn_classify(sm, q * c)


class TestEvaluate:
    def test_perfect(self):
        m = model([0, 10, 20], ["a", "b", "c"], 1)
        test = [(fv(mean_x=x), lab) for x, lab in [(0, "a"), (10, "b"), (20, "c"), (21, "c")]]
        res = evaluate(m, test)
        assert res.balanced_accuracy == 1.0
        assert dict(res.rows()) == {"a": 1.0, "b": 1.0, "c": 1.0}

    def test_undefined_counts_wrong(self):
        m = model([0, 10], ["a", "b"], 1)
        res = evaluate(m, [(fv(mean_x=0.0), "a"), (fv(mean_x=math.nan), "a"), (fv(mean_x=10.0), "b")])
        assert res.per_class == {"a": 0.5, "b": 1.0}
        assert res.balanced_accuracy == 0.75

    def test_balanced_not_plain(self):
        res = balanced_accuracy(["a"] * 9 + ["b"], [1] * 9 + [0])
        assert res.balanced_accuracy == 0.5

    def test_random_predictions_near_chance(self):
        rng = random.Random(0)
        truth = [i % 10 for i in range(20_000)]
        scores = [1.0 if rng.randrange(10) == t else 0.0 for t in truth]
        assert balanced_accuracy(truth, scores).balanced_accuracy == pytest.approx(0.1, abs=0.01)

    def test_constant_feature_is_chance(self):
        # every training vector identical: prediction collapses to one class
        vecs = [fv(max_x=33.0) for _ in range(100)]
        labels = [i % 10 for i in range(100)]
        m = KnnModel.fit(vecs, labels, "max_x", k=10)
        res = evaluate(m, [(fv(max_x=33.0), i % 10) for i in range(100)])
        assert res.balanced_accuracy == pytest.approx(0.1)

    def test_empty(self):
        with pytest.raises(ValueError):
            balanced_accuracy([], [])
