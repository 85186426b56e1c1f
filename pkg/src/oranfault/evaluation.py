"""Cross-validation splits, confusion matrices, classification metrics and reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import derive
from .telemetry import N_CLASSES, FaultLabel


class StratificationError(ValueError):
    pass


def stratified_kfold(labels, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Split indices into ``k`` disjoint folds with per-class counts differing by at most one.

    Each class is shuffled and dealt round-robin; the starting fold rotates
    from class to class so fold sizes stay balanced too. Classes that are
    absent from ``labels`` are simply skipped.
    """
    y = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise StratificationError("k must be >= 2")
    counts = np.bincount(y, minlength=N_CLASSES)
    short = [c for c in range(len(counts)) if 0 < counts[c] < k]
    if short:
        detail = ", ".join(f"class {c} has {counts[c]}" for c in short)
        raise StratificationError(f"need at least {k} samples per class: {detail}; counts={counts.tolist()}")
    rng = derive(seed, "folds")
    buckets: list[list[np.ndarray]] = [[] for _ in range(k)]
    offset = 0
    for c in range(len(counts)):
        idx = np.flatnonzero(y == c)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        for j in range(k):
            buckets[(j + offset) % k].append(idx[j::k])
        offset = (offset + idx.size) % k
    return [np.sort(np.concatenate(b)) if b else np.empty(0, np.int64) for b in buckets]


def blocked_kfold(n: int, k: int = 5) -> list[np.ndarray]:
    """Contiguous time blocks, an alternative split that avoids window overlap leakage."""
    if k < 2 or n < k:
        raise StratificationError(f"cannot cut {n} samples into {k} blocks")
    edges = np.linspace(0, n, k + 1).round().astype(np.int64)
    return [np.arange(edges[i], edges[i + 1]) for i in range(k)]


def confusion(true_labels, predicted_labels, n_classes: int = N_CLASSES) -> np.ndarray:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted labels")
    cm = np.zeros((n_classes, n_classes))
    np.add.at(cm, (t, p), 1.0)
    return cm


@dataclass(frozen=True)
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    precision_undefined: np.ndarray  # class never predicted
    present: np.ndarray  # class occurs in the truth or the predictions

    def _macro(self, v):
        return float(v[self.present].mean())

    @property
    def macro_precision(self):
        return self._macro(self.precision)

    @property
    def macro_recall(self):
        return self._macro(self.recall)

    @property
    def macro_f1(self):
        return self._macro(self.f1)

    def _weighted(self, v):
        total = self.support.sum()
        return float((v * self.support).sum() / total) if total else 0.0

    @property
    def weighted_precision(self):
        return self._weighted(self.precision)

    @property
    def weighted_recall(self):
        return self._weighted(self.recall)

    @property
    def weighted_f1(self):
        return self._weighted(self.f1)

    def summary(self) -> dict[str, float]:
        """The headline rows, in report order. "F1-Score" is the weighted F1."""
        return {
            "Accuracy": self.accuracy,
            "F1-Score": self.weighted_f1,
            "Macro Average Precision": self.macro_precision,
            "Macro Average Recall": self.macro_recall,
            "Macro Average F1-Score": self.macro_f1,
            "Weighted Average Precision": self.weighted_precision,
            "Weighted Average Recall": self.weighted_recall,
            "Weighted Average F1-Score": self.weighted_f1,
        }


def _ratio(num, den):
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0)


def metrics_from_confusion(cm) -> ClassMetrics:
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if np.any(cm < 0):
        raise ValueError("confusion matrix entries must be non-negative")
    total = cm.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(cm)
    col = cm.sum(axis=0)
    row = cm.sum(axis=1)
    precision = _ratio(diag, col)
    recall = _ratio(diag, row)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return ClassMetrics(precision, recall, f1, row, float(diag.sum() / total), col == 0,
                        (row > 0) | (col > 0))


def forecast_rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("cannot compute RMSE of empty arrays")
    return math.sqrt(float(np.mean((p - a) ** 2)))


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    confusion: np.ndarray
    metrics: ClassMetrics
    rmse: float
    baseline_confusion: np.ndarray | None = None
    baseline_metrics: ClassMetrics | None = None
    lstm_loss_history: list[float] = field(default_factory=list)
    explained_variance_ratio: float = float("nan")


SUMMARY_ROWS = tuple(metrics_from_confusion(np.eye(2)).summary())


@dataclass
class EvaluationReport:
    folds: list[FoldResult]
    classifier: str = "random_forest"
    baseline: str = "adaboost"
    n_windows: int = 0
    n_rows: int = 0

    @property
    def mean_confusion(self) -> np.ndarray:
        return np.mean([f.confusion for f in self.folds], axis=0)

    def mean_summary(self, which: str = "main") -> dict[str, float]:
        ms = [f.metrics if which == "main" else f.baseline_metrics for f in self.folds]
        return {k: float(np.mean([m.summary()[k] for m in ms])) for k in SUMMARY_ROWS}

    def mean_per_class(self) -> dict[str, np.ndarray]:
        return {
            "precision": np.mean([f.metrics.precision for f in self.folds], axis=0),
            "recall": np.mean([f.metrics.recall for f in self.folds], axis=0),
            "f1": np.mean([f.metrics.f1 for f in self.folds], axis=0),
            "support": np.mean([f.metrics.support for f in self.folds], axis=0),
        }

    @property
    def mean_rmse(self) -> float:
        return float(np.mean([f.rmse for f in self.folds]))

    @staticmethod
    def _loss_ends(f: FoldResult) -> tuple[float, float]:
        h = f.lstm_loss_history
        return (h[0], h[-1]) if h else (float("nan"), float("nan"))

    @property
    def has_baseline(self) -> bool:
        return all(f.baseline_metrics is not None for f in self.folds)

    def to_csv(self) -> str:
        classes = [lab.name.lower() for lab in FaultLabel]
        head = (["fold", "model", "n_train", "n_test", "rmse", "lstm_loss_first", "lstm_loss_final"]
                + [k.lower().replace(" ", "_").replace("-", "_") for k in SUMMARY_ROWS]
                + [f"{m}_{c}" for m in ("precision", "recall", "f1") for c in classes]
                + [f"precision_undefined_{c}" for c in classes]
                + [f"cm_{a}_{b}" for a in range(N_CLASSES) for b in range(N_CLASSES)])
        rows = [",".join(head)]

        def row(tag, model, n_train, n_test, rmse, losses, summary, m, cm, undefined):
            vals = [tag, model, n_train, n_test, _fmt(rmse), _fmt(losses[0]), _fmt(losses[1])]
            vals += [_fmt(summary[k]) for k in SUMMARY_ROWS]
            vals += [_fmt(v) for arr in (m["precision"], m["recall"], m["f1"]) for v in arr]
            vals += [str(int(u)) for u in undefined]
            vals += [_fmt(v) for v in np.asarray(cm).ravel()]
            return ",".join(str(v) for v in vals)

        models = [("main", self.classifier)] + ([("base", self.baseline)] if self.has_baseline else [])
        for which, name in models:
            for f in self.folds:
                met = f.metrics if which == "main" else f.baseline_metrics
                cm = f.confusion if which == "main" else f.baseline_confusion
                per = {"precision": met.precision, "recall": met.recall, "f1": met.f1}
                rows.append(row(f.fold, name, f.n_train, f.n_test, f.rmse, self._loss_ends(f),
                                met.summary(), per, cm, met.precision_undefined))
            mets = [f.metrics if which == "main" else f.baseline_metrics for f in self.folds]
            per = {k: np.mean([getattr(m, k) for m in mets], axis=0) for k in ("precision", "recall", "f1")}
            cm = np.mean([f.confusion if which == "main" else f.baseline_confusion for f in self.folds], axis=0)
            undefined = np.any([m.precision_undefined for m in mets], axis=0)
            losses = np.mean([self._loss_ends(f) for f in self.folds], axis=0)
            rows.append(row("mean", name, _fmt(np.mean([f.n_train for f in self.folds])),
                            _fmt(np.mean([f.n_test for f in self.folds])), self.mean_rmse,
                            losses, self.mean_summary(which), per, cm, undefined))
        return "\n".join(rows) + "\n"

    def to_text(self) -> str:
        names = [lab.title for lab in FaultLabel]
        out = [f"Cross-validation: {len(self.folds)} folds, {self.n_windows} windows "
               f"from {self.n_rows} one-second rows", ""]
        out.append(f"Averaged performance across all folds ({self.classifier})")
        out.append(f"{'Metric':<30}{'Value':>10}")
        for k, v in self.mean_summary().items():
            out.append(f"{k:<30}{v * 100:>9.2f}%")
        out.append("")
        out.append("Per-fold performance")
        out.append(f"{'Fold':<6}{'Accuracy':>10}{'F1-Score':>10}{'RMSE':>10}"
                   f"{'LSTM loss first':>17}{'final':>10}")
        for f in self.folds:
            s = f.metrics.summary()
            first, final = self._loss_ends(f)
            out.append(f"{f.fold:<6}{s['Accuracy'] * 100:>9.2f}%{s['F1-Score'] * 100:>9.2f}%{f.rmse:>10.5f}"
                       f"{first:>17.6f}{final:>10.6f}")
        first, final = np.mean([self._loss_ends(f) for f in self.folds], axis=0)
        out.append(f"{'Mean':<6}{self.mean_summary()['Accuracy'] * 100:>9.2f}%"
                   f"{self.mean_summary()['F1-Score'] * 100:>9.2f}%{self.mean_rmse:>10.5f}"
                   f"{first:>17.6f}{final:>10.6f}")
        out.append("")
        out.append("Average confusion matrix across all folds (rows: true, columns: predicted)")
        width = max(len(n) for n in names) + 2
        out.append(" " * width + "".join(f"{n:>{width}}" for n in names))
        for n, r in zip(names, self.mean_confusion):
            out.append(f"{n:<{width}}" + "".join(f"{v:>{width}.1f}" for v in r))
        out.append("")
        out.append("Average classification report")
        per = self.mean_per_class()
        out.append(f"{'Class':<{width}}{'Precision':>11}{'Recall':>9}{'F1-Score':>10}{'Support':>10}")
        for c, n in enumerate(names):
            out.append(f"{n:<{width}}{per['precision'][c]:>11.4f}{per['recall'][c]:>9.4f}"
                       f"{per['f1'][c]:>10.4f}{per['support'][c]:>10.1f}")
        undefined = [names[c] for c in range(N_CLASSES)
                     if any(f.metrics.precision_undefined[c] for f in self.folds)]
        if undefined:
            out.append("precision undefined (class never predicted in some fold, reported as 0): "
                       + ", ".join(undefined))
        if self.has_baseline:
            out.append("")
            out.append("Classifier comparison (fold-averaged)")
            out.append(f"{'Metric':<30}{self.classifier:>16}{self.baseline:>16}")
            a, b = self.mean_summary(), self.mean_summary("base")
            for k in SUMMARY_ROWS:
                out.append(f"{k:<30}{a[k] * 100:>15.2f}%{b[k] * 100:>15.2f}%")
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".10g")
