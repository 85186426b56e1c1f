"""Slow, independent reference implementations used only by the tests.

None of these import the package's numerical code; they are written with
plain loops so that agreement with the vectorised versions means something.
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_eigen(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1e-300)
    off_diag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum(a[off_diag] ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # rotate columns p, q then rows p, q
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * ap - s * aq, s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vp - s * vq, s * vp + c * vq
    evals = np.diag(a).copy()
    order = sorted(range(n), key=lambda i: -evals[i])
    return evals[order], v[:, order]


def sample_covariance(x):
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    mean = [sum(x[i, j] for i in range(n)) / n for j in range(d)]
    cov = np.zeros((d, d))
    for a in range(d):
        for b in range(a, d):
            s = sum((x[i, a] - mean[a]) * (x[i, b] - mean[b]) for i in range(n)) / (n - 1)
            cov[a, b] = cov[b, a] = s
    return cov


def _sigmoid(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def lstm_forward_scalar(tensors, window):
    """Element-by-element LSTM recurrence; gate order input, forget, cell, output."""
    layer_in = [list(map(float, row)) for row in window]
    n_layers = sum(1 for k in tensors if k.endswith(".w_hh"))
    for layer in range(1, n_layers + 1):
        w_ih = tensors[f"lstm{layer}.w_ih"]
        w_hh = tensors[f"lstm{layer}.w_hh"]
        b = tensors[f"lstm{layer}.b"]
        h_size = w_hh.shape[1]
        h = [0.0] * h_size
        c = [0.0] * h_size
        outputs = []
        for x in layer_in:
            z = []
            for r in range(4 * h_size):
                acc = b[r]
                for j, xv in enumerate(x):
                    acc += w_ih[r, j] * xv
                for j, hv in enumerate(h):
                    acc += w_hh[r, j] * hv
                z.append(acc)
            new_h, new_c = [], []
            for u in range(h_size):
                i = _sigmoid(z[u])
                f = _sigmoid(z[h_size + u])
                g = math.tanh(z[2 * h_size + u])
                o = _sigmoid(z[3 * h_size + u])
                cu = f * c[u] + i * g
                new_c.append(cu)
                new_h.append(o * math.tanh(cu))
            h, c = new_h, new_c
            outputs.append(h)
        layer_in = outputs
    top = layer_in[-1]
    fw, fb = tensors["fc.w"], tensors["fc.b"]
    return np.array([fb[o] + sum(fw[o, j] * top[j] for j in range(len(top))) for o in range(fw.shape[0])])


def gini_direct(labels):
    labels = list(labels)
    if not labels:
        return 0.0
    n = len(labels)
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def exhaustive_tree_accuracy(x, y, max_depth, min_samples_split=2, tol=1e-12):
    """Training accuracy of a greedy Gini tree that tries every feature and every threshold.

    Scores each candidate by direct impurity counting in Python loops; ties go to
    the lowest feature, then the lowest threshold.
    """
    x = [list(map(float, r)) for r in x]
    y = [int(v) for v in y]

    def majority_hits(ys):
        counts = [ys.count(c) for c in range(4)]
        return max(counts)

    def grow(rows, depth):
        ys = [y[r] for r in rows]
        if depth >= max_depth or len(rows) < min_samples_split or len(set(ys)) <= 1:
            return majority_hits(ys)
        parent = gini_direct(ys)
        best = None
        for f in range(len(x[0])):
            vals = sorted(set(x[r][f] for r in rows))
            for lo, hi in zip(vals, vals[1:]):
                t = lo + (hi - lo) / 2.0
                if not lo <= t < hi:
                    t = lo
                left = [y[r] for r in rows if x[r][f] <= t]
                right = [y[r] for r in rows if x[r][f] > t]
                gain = parent - (len(left) * gini_direct(left) + len(right) * gini_direct(right)) / len(rows)
                if best is None or gain > best[0] + tol:
                    best = (gain, f, t)
        if best is None:
            return majority_hits(ys)
        _, f, t = best
        return (grow([r for r in rows if x[r][f] <= t], depth + 1)
                + grow([r for r in rows if x[r][f] > t], depth + 1))

    return grow(list(range(len(y))), 0) / len(y)


def rmse_loop(p, a):
    total, count = 0.0, 0
    for i in range(len(p)):
        for j in range(len(p[i])):
            total += (float(p[i][j]) - float(a[i][j])) ** 2
            count += 1
    return math.sqrt(total / count)
