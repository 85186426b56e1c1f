"""Principal component analysis via the symmetric eigendecomposition of the covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-8
DEFAULT_COMPONENTS = 10


class PcaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # r x d, rows are principal axes
    explained_variance: np.ndarray
    total_variance: float = float("nan")

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        comp = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        ev = np.asarray(self.explained_variance, dtype=np.float64)
        if comp.shape[1] != mean.shape[0] or ev.shape != (comp.shape[0],):
            raise PcaError("PCA model shape mismatch")
        gram = comp @ comp.T
        if np.max(np.abs(gram - np.eye(comp.shape[0]))) > ORTHONORMAL_TOL:
            raise PcaError("PCA components are not orthonormal")
        if np.any(np.diff(ev) > 0) or np.any(ev < 0):
            raise PcaError("explained variance must be non-negative and non-increasing")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "explained_variance", ev)

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = self.total_variance
        if not np.isfinite(total) or total <= 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / total

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise PcaError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.components.T

    def inverse_transform(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.n_components:
            raise PcaError(f"expected {self.n_components} components, got {z.shape[-1]}")
        return z @ self.components + self.mean

    def save(self, path) -> None:
        """CSV blocks: mean row, one row per component, explained-variance row."""
        lines = [f"pca,{self.n_features},{self.n_components},{self.total_variance!r}"]
        lines.append("mean," + ",".join(repr(v) for v in self.mean.tolist()))
        for i, row in enumerate(self.components.tolist()):
            lines.append(f"component{i}," + ",".join(repr(v) for v in row))
        lines.append("explained_variance," + ",".join(repr(v) for v in self.explained_variance.tolist()))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "PcaModel":
        with open(path, encoding="utf-8") as fh:
            rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
        if not rows or rows[0][0] != "pca":
            raise PcaError(f"{path}: not a PCA model file")
        d, r, total = int(rows[0][1]), int(rows[0][2]), float(rows[0][3])
        if len(rows) != r + 3:
            raise PcaError(f"{path}: expected {r + 3} lines, found {len(rows)}")

        def values(row, tag, n):
            if row[0] != tag or len(row) != n + 1:
                raise PcaError(f"{path}: malformed {tag} row")
            return [float(v) for v in row[1:]]

        mean = values(rows[1], "mean", d)
        comps = [values(rows[2 + i], f"component{i}", d) for i in range(r)]
        ev = values(rows[-1], "explained_variance", r)
        return cls(np.array(mean), np.array(comps).reshape(r, d), np.array(ev), total)


def _orient(vectors):
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_pca(data, r: int = DEFAULT_COMPONENTS) -> PcaModel:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise PcaError("data must be an n x d matrix")
    n, d = x.shape
    if n < 2:
        raise PcaError(f"need at least 2 rows to fit PCA, got {n}")
    if not 1 <= r <= min(n - 1, d):
        raise PcaError(f"r={r} outside [1, {min(n - 1, d)}]")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")[:r]
    ev = np.clip(evals[order], 0.0, None)
    axes = _orient(evecs[:, order]).T
    return PcaModel(mean, axes, ev, float(np.trace(cov)))
