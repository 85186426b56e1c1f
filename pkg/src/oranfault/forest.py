"""CART decision trees (Gini) and a bootstrap Random Forest built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive
from .telemetry import N_CLASSES

# relative slack when comparing split scores, so mathematically tied splits
# resolve by index order instead of by rounding noise
SCORE_RTOL = 1e-12


class ClassifierError(ValueError):
    pass


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def midpoint(lo: float, hi: float) -> float:
    """Split point between two distinct sorted values that keeps ``lo`` left and ``hi`` right."""
    mid = lo + (hi - lo) / 2.0
    return lo if not (lo <= mid < hi) else mid


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 12
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"  # "sqrt", "all", or an explicit count

    def __post_init__(self):
        if self.max_depth < 0:
            raise ClassifierError("max_depth must be >= 0")
        if self.min_samples_split < 2:
            raise ClassifierError("min_samples_split must be >= 2")

    def features_per_split(self, d: int) -> int:
        mf = self.max_features
        if mf in (None, "all"):
            return d
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(int(mf), d))


class DecisionTree:
    """Array-backed binary tree; ``feature[i] < 0`` marks a leaf.

    Samples with ``x[feature] <= threshold`` go left.
    """

    def __init__(self, feature, threshold, left, right, counts, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(-1, N_CLASSES)
        self.n_features = int(n_features)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def leaf_class(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)

    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def apply(self, x) -> np.ndarray:
        """Leaf index reached by every row of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {x.shape[1]}")
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = x[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] >= 0
        return node

    def predict(self, x) -> np.ndarray:
        return self.leaf_class[self.apply(x)]

    def to_lines(self) -> list[str]:
        out = []

        def emit(i):
            if self.feature[i] < 0:
                out.append("L," + ",".join(str(int(c)) for c in self.counts[i]))
            else:
                out.append(f"I,{int(self.feature[i])},{float(self.threshold[i])!r}")
                emit(self.left[i])
                emit(self.right[i])

        emit(0)
        return out

    @classmethod
    def from_lines(cls, lines, n_features) -> "DecisionTree":
        feature, threshold, left, right, counts = [], [], [], [], []
        pos = 0

        def parse():
            nonlocal pos
            if pos >= len(lines):
                raise ClassifierError("truncated tree")
            parts = lines[pos].split(",")
            pos += 1
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            if parts[0] == "L" and len(parts) == N_CLASSES + 1:
                counts.append([int(c) for c in parts[1:]])
                return i
            if parts[0] != "I" or len(parts) != 3:
                raise ClassifierError(f"bad tree line {lines[pos - 1]!r}")
            counts.append([0] * N_CLASSES)
            feature[i] = int(parts[1])
            threshold[i] = float(parts[2])
            left[i] = parse()
            right[i] = parse()
            counts[i] = [a + b for a, b in zip(counts[left[i]], counts[right[i]])]
            return i

        parse()
        if pos != len(lines):
            raise ClassifierError("trailing lines after tree")
        return cls(feature, threshold, left, right, counts, n_features)

    def __eq__(self, other):
        return isinstance(other, DecisionTree) and self.to_lines() == other.to_lines()


def best_split(x, y, features):
    """Best Gini split over ``features`` (ascending) for the node samples.

    Maximises sum_c L_c^2/n_L + sum_c R_c^2/n_R, which is equivalent to the
    largest impurity decrease. Returns ``(feature, threshold)`` or ``None``
    when every candidate feature is constant.
    """
    m = x.shape[0]
    sub = np.ascontiguousarray(x[:, features].T)  # (q, m)
    # ordering among equal values never matters: splits only fall between distinct values
    order = np.argsort(sub, axis=1)
    vals = np.take_along_axis(sub, order, axis=1)
    valid = vals[:, :-1] < vals[:, 1:]
    if not valid.any():
        return None
    ys = y[order]
    n_left = np.arange(1, m, dtype=np.float64)
    n_right = m - n_left
    sq_left = np.zeros(valid.shape)
    sq_right = np.zeros(valid.shape)
    for c in range(N_CLASSES):
        cum = np.cumsum(ys == c, axis=1, dtype=np.float64)
        left_c = cum[:, :-1]
        right_c = cum[:, -1:] - left_c
        sq_left += left_c * left_c
        sq_right += right_c * right_c
    score = sq_left / n_left + sq_right / n_right
    score[~valid] = -np.inf
    best = score.max()
    flat = int(np.argmax(score >= best - SCORE_RTOL * abs(best)))
    qi, pos = divmod(flat, m - 1)
    return int(features[qi]), midpoint(float(vals[qi, pos]), float(vals[qi, pos + 1]))


def fit_tree(data, labels, params: TreeParams = TreeParams(), rng=None) -> DecisionTree:
    x = np.asarray(data, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ClassifierError("cannot fit a tree on empty data")
    if y.shape != (x.shape[0],) or y.min() < 0 or y.max() >= N_CLASSES:
        raise ClassifierError(f"labels must be codes 0..{N_CLASSES - 1}, one per row")
    d = x.shape[1]
    q = params.features_per_split(d)
    if rng is None:
        rng = derive(0, "tree")
    feature, threshold, left, right, counts = [], [], [], [], []

    def grow(idx, depth):
        i = len(feature)
        hist = np.bincount(y[idx], minlength=N_CLASSES)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(hist)
        if depth >= params.max_depth or len(idx) < params.min_samples_split or np.count_nonzero(hist) <= 1:
            return i
        feats = np.arange(d) if q == d else np.sort(rng.choice(d, size=q, replace=False))
        split = best_split(x[idx], y[idx], feats)
        if split is None:
            return i
        f, t = split
        go_left = x[idx, f] <= t
        feature[i], threshold[i] = f, t
        left[i] = grow(idx[go_left], depth + 1)
        right[i] = grow(idx[~go_left], depth + 1)
        return i

    grow(np.arange(x.shape[0]), 0)
    return DecisionTree(feature, threshold, left, right, counts, d)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2
    max_features: int | str | None = "sqrt"
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ClassifierError("n_trees must be >= 1")

    @property
    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.min_samples_split, self.max_features)


class ForestModel:
    def __init__(self, trees, params: ForestParams, seed: int, n_features: int, oob_accuracy=None):
        self.trees = list(trees)
        self.params = params
        self.seed = int(seed)
        self.n_features = int(n_features)
        self.oob_accuracy = oob_accuracy

    def votes(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ClassifierError(f"expected {self.n_features} features, got {x.shape[1]}")
        v = np.zeros((x.shape[0], N_CLASSES))
        rows = np.arange(x.shape[0])
        for t in self.trees:
            v[rows, t.predict(x)] += 1.0
        return v

    def predict_proba(self, x) -> np.ndarray:
        v = self.votes(x)
        return v / v.sum(axis=1, keepdims=True)

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.votes(x), axis=1)  # argmax keeps the lowest code on ties

    def save(self, path) -> None:
        p = self.params
        lines = [
            f"forest,{len(self.trees)},{p.max_depth},{p.min_samples_split},"
            f"{p.max_features},{int(p.bootstrap)},{self.seed},{self.n_features}"
        ]
        for i, t in enumerate(self.trees):
            lines.append(f"tree,{i}")
            lines.extend(t.to_lines())
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        head = lines[0].split(",") if lines else []
        if len(head) != 8 or head[0] != "forest":
            raise ClassifierError(f"{path}: not a forest file")
        n_trees, depth, mss = int(head[1]), int(head[2]), int(head[3])
        mf = head[4] if head[4] in ("sqrt", "all", "None") else int(head[4])
        mf = None if mf == "None" else mf
        params = ForestParams(n_trees, depth, mss, mf, bool(int(head[5])))
        n_features = int(head[7])
        sections: list[list[str]] = []
        for ln in lines[1:]:
            if ln.startswith("tree,"):
                sections.append([])
            elif not sections:
                raise ClassifierError(f"{path}: node line before first tree header")
            else:
                sections[-1].append(ln)
        if len(sections) != n_trees:
            raise ClassifierError(f"{path}: header says {n_trees} trees, found {len(sections)}")
        trees = [DecisionTree.from_lines(s, n_features) for s in sections]
        return cls(trees, params, int(head[6]), n_features)


def fit_forest(data, labels, params: ForestParams = ForestParams(), seed: int = 0,
               compute_oob: bool = False) -> ForestModel:
    x = np.asarray(data, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ClassifierError("a forest needs at least 2 samples")
    present = np.unique(y)
    if present.size < 2:
        raise ClassifierError(f"a forest needs at least 2 classes; only class {int(present[0])} present")
    n = x.shape[0]
    trees = []
    oob_votes = np.zeros((n, N_CLASSES)) if compute_oob and params.bootstrap else None
    for i in range(params.n_trees):
        rng = derive(seed, "tree", i)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        tree = fit_tree(x[idx], y[idx], params.tree_params, rng)
        trees.append(tree)
        if oob_votes is not None:
            out = np.setdiff1d(np.arange(n), idx)
            if out.size:
                oob_votes[out, tree.predict(x[out])] += 1.0
    oob = None
    if oob_votes is not None:
        seen = oob_votes.sum(axis=1) > 0
        if seen.any():
            oob = float(np.mean(np.argmax(oob_votes[seen], axis=1) == y[seen]))
    return ForestModel(trees, params, seed, x.shape[1], oob)
