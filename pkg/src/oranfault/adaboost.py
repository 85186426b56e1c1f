"""Multi-class AdaBoost (SAMME) over decision stumps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forest import SCORE_RTOL, ClassifierError, midpoint
from .telemetry import N_CLASSES

ERR_FLOOR = 1e-10
FEATURE_CHUNK = 32


def learner_weight(err: float, k: int = N_CLASSES) -> float:
    err = min(max(err, ERR_FLOOR), 1.0 - ERR_FLOOR)
    return math.log((1.0 - err) / err) + math.log(k - 1)


@dataclass(frozen=True)
class Stump:
    feature: int  # -1: constant prediction ``left_class``
    threshold: float
    left_class: int
    right_class: int

    def predict(self, x):
        x = np.atleast_2d(x)
        if self.feature < 0:
            return np.full(x.shape[0], self.left_class, dtype=np.int64)
        return np.where(x[:, self.feature] <= self.threshold, self.left_class, self.right_class)


@dataclass
class AdaBoostModel:
    stumps: list[Stump] = field(default_factory=list)
    alphas: list[float] = field(default_factory=list)
    prior_class: int = 0
    n_features: int = 0
    n_rounds: int = 50

    def scores(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {x.shape[1]}")
        s = np.zeros((x.shape[0], N_CLASSES))
        rows = np.arange(x.shape[0])
        if not self.stumps:
            s[:, self.prior_class] = 1.0
        for stump, a in zip(self.stumps, self.alphas):
            s[rows, stump.predict(x)] += a
        return s

    def predict(self, x):
        return np.argmax(self.scores(x), axis=1)

    def predict_proba(self, x):
        s = self.scores(x)
        return s / s.sum(axis=1, keepdims=True)


def reweight(w, miss, alpha):
    """Boost the weight of misclassified samples and renormalise to sum 1."""
    w = w * np.exp(alpha * np.asarray(miss, dtype=np.float64))
    return w / w.sum()


class StumpSearch:
    """Per-feature sort orders and class masks, computed once per fit.

    Arrays are laid out feature-major, ``(q, n)``, so every reduction runs
    along contiguous memory.
    """

    def __init__(self, x, y):
        self.y = y
        self.n, self.d = x.shape
        self.chunks = []
        for lo in range(0, self.d, FEATURE_CHUNK):
            cols = np.arange(lo, min(lo + FEATURE_CHUNK, self.d))
            sub = np.ascontiguousarray(x[:, cols].T)
            order = np.argsort(sub, axis=1)
            vals = np.take_along_axis(sub, order, axis=1)
            ys = y[order]
            masks = [ys == c for c in range(N_CLASSES)]
            valid = vals[:, :-1] < vals[:, 1:]
            self.chunks.append((cols, order, vals, masks, valid))

    def best(self, w) -> tuple[Stump, float]:
        """Stump with the smallest weighted error; ties by lowest feature, then threshold."""
        total = w.sum()
        class_w = np.bincount(self.y, weights=w, minlength=N_CLASSES)
        majority = int(np.argmax(class_w))
        best = (Stump(-1, 0.0, majority, majority), 1.0 - class_w.max() / total)
        best_correct = class_w.max()
        n = self.n
        for cols, order, vals, masks, valid in self.chunks:
            ws = w[order]
            left = [np.cumsum(np.where(mk, ws, 0.0), axis=1)[:, :-1] for mk in masks]
            right = [class_w[c] - left[c] for c in range(N_CLASSES)]
            correct = np.maximum.reduce(left) + np.maximum.reduce(right)
            correct[~valid] = -np.inf
            top = correct.max()
            if top > best_correct + SCORE_RTOL * total:
                flat = int(np.argmax(correct >= top - SCORE_RTOL * total))
                qi, pos = divmod(flat, n - 1)
                lc = [float(l[qi, pos]) for l in left]
                rc = [float(r[qi, pos]) for r in right]
                stump = Stump(int(cols[qi]), midpoint(float(vals[qi, pos]), float(vals[qi, pos + 1])),
                              int(np.argmax(lc)), int(np.argmax(rc)))
                best, best_correct = (stump, 1.0 - top / total), top
        return best


def fit_adaboost(data, labels, n_rounds: int = 50, rng=None) -> AdaBoostModel:
    """SAMME boosting. ``rng`` is accepted for interface symmetry; fitting is deterministic."""
    x = np.asarray(data, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ClassifierError("AdaBoost needs at least 2 samples")
    if np.unique(y).size < 2:
        raise ClassifierError("AdaBoost needs at least 2 classes")
    n = x.shape[0]
    w = np.full(n, 1.0 / n)
    search = StumpSearch(x, y)
    model = AdaBoostModel(prior_class=int(np.argmax(np.bincount(y, minlength=N_CLASSES))),
                          n_features=x.shape[1], n_rounds=n_rounds)
    for _ in range(n_rounds):
        stump, _ = search.best(w)
        miss = stump.predict(x) != y
        err = float(w[miss].sum() / w.sum())
        if err >= 1.0 - 1.0 / N_CLASSES:
            break
        alpha = learner_weight(err)
        model.stumps.append(stump)
        model.alphas.append(alpha)
        if err <= ERR_FLOOR:
            break
        w = reweight(w, miss, alpha)
    return model
