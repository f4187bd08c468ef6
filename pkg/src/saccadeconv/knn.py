"""k-nearest-neighbour classification on recording statistics, plus
balanced-accuracy evaluation shared by all classifiers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from .analysis import FEATURE_NAMES, FeatureVector


class UndefinedFeatureError(ValueError):
    """The sample has no defined value for the selected features."""


@dataclass(frozen=True, eq=False)
class KnnModel:
    """Training points on a fixed feature subset.

    Labels are compared in sorted order for the final tie-break.
    """

    k: int
    features: tuple[str, ...]
    points: np.ndarray  # (n, d)
    labels: tuple

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        bad = set(self.features) - set(FEATURE_NAMES)
        if bad:
            raise ValueError(f"unknown features {sorted(bad)}")
        pts = np.asarray(self.points, dtype=float).reshape(len(self.labels), len(self.features))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def fit(cls, vectors: Sequence[FeatureVector], labels: Sequence[Hashable],
            features: str | Sequence[str], k: int = 10) -> "KnnModel":
        feats = (features,) if isinstance(features, str) else tuple(features)
        pts, labs = [], []
        for fv, lab in zip(vectors, labels):
            row = [fv.get(f) for f in feats]
            if np.all(np.isfinite(row)):
                pts.append(row)
                labs.append(lab)
        return cls(k, feats, np.array(pts, dtype=float), tuple(labs))

    def transform(self, fv: FeatureVector) -> np.ndarray:
        return np.array([fv.get(f) for f in self.features], dtype=float)

    def classify(self, fv: FeatureVector):
        return knn_classify(self, self.transform(fv))

    def scaled(self, c: float) -> "KnnModel":
        return KnnModel(self.k, self.features, self.points * c, self.labels)


def knn_classify(model: KnnModel, sample) -> Hashable:
    """Majority label among the ``k`` nearest training points (Euclidean).

    Neighbours at equal distance are taken in training order. Vote ties go
    to the label with the smaller summed neighbour distance, then to the
    smallest label.
    """
    if len(model.labels) == 0:
        raise ValueError("model has no training points")
    x = np.asarray(sample, dtype=float)
    if not np.all(np.isfinite(x)):
        raise UndefinedFeatureError("sample features are undefined")
    d = np.sqrt(((model.points - x) ** 2).sum(axis=1))
    k = min(model.k, len(d))
    nearest = np.argsort(d, kind="stable")[:k]
    votes: dict = {}
    for i in nearest:
        lab = model.labels[i]
        n, s = votes.get(lab, (0, 0.0))
        votes[lab] = (n + 1, s + d[i])
    return min(votes, key=lambda lab: (-votes[lab][0], votes[lab][1], _order_key(lab)))


def _order_key(label):
    return (0, label) if isinstance(label, (int, float, np.integer)) else (1, str(label))


@dataclass(frozen=True)
class Evaluation:
    per_class: dict
    balanced_accuracy: float
    n: int

    def rows(self):
        for lab in sorted(self.per_class, key=_order_key):
            yield lab, self.per_class[lab]


def balanced_accuracy(true_labels: Sequence, scores: Sequence[float]) -> Evaluation:
    """Mean over classes of the mean per-sample score (1/0 for hard decisions)."""
    per: dict = {}
    for lab, sc in zip(true_labels, scores):
        per.setdefault(lab, []).append(float(sc))
    if not per:
        raise ValueError("empty test set")
    acc = {lab: float(np.mean(v)) for lab, v in per.items()}
    return Evaluation(acc, float(np.mean(list(acc.values()))), len(true_labels))


def evaluate(model: KnnModel, test: Sequence[tuple[FeatureVector, Hashable]]) -> Evaluation:
    """Balanced accuracy; samples with undefined features count as wrong."""
    truth, scores = [], []
    for fv, lab in test:
        try:
            pred = model.classify(fv)
        except UndefinedFeatureError:
            pred = None
        truth.append(lab)
        scores.append(1.0 if pred == lab else 0.0)
    return balanced_accuracy(truth, scores)
