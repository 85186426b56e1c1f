"""Alignment onto a 1-second grid, gap filling, min-max scaling and windowing."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .telemetry import DatasetTable, Schema, TelemetryFrame

DEFAULT_K = 60
DEFAULT_M = 5


class FrameRangeError(ValueError):
    pass


def _blocks(frames):
    """Accept FrameBlock-like columns or a flat stream of TelemetryFrame."""
    frames = list(frames) if not isinstance(frames, list) else frames
    if frames and isinstance(frames[0], TelemetryFrame):
        ts, vals = defaultdict(list), defaultdict(list)
        for f in frames:
            ts[f.metric_id].append(f.timestamp_ms)
            vals[f.metric_id].append(f.value)
        return [(mid, np.asarray(ts[mid], dtype=np.int64), np.asarray(vals[mid], dtype=np.float64))
                for mid in ts]
    return [(b.metric_id, np.asarray(b.timestamps_ms), np.asarray(b.values, dtype=np.float64))
            for b in frames]


def align(frames, schema: Schema, duration_s: int, labels=None) -> DatasetTable:
    """Average every observation into its 1-second tick; unobserved cells are NaN.

    ``labels`` (per-second codes) is attached when given, otherwise all ticks
    are labelled 0.
    """
    features = np.full((duration_s, len(schema)), np.nan)
    limit_ms = duration_s * 1000
    for metric_id, ts, vals in _blocks(frames):
        try:
            col = schema.index(metric_id)
        except KeyError:
            raise FrameRangeError(f"frame for unknown metric {metric_id!r}") from None
        if ts.size == 0:
            continue
        bad = (ts < 0) | (ts >= limit_ms)
        if bad.any():
            k = int(np.argmax(bad))
            raise FrameRangeError(
                f"frame {metric_id} at {int(ts[k])} ms outside [0, {limit_ms}) ms"
            )
        tick = ts // 1000
        counts = np.bincount(tick, minlength=duration_s)
        sums = np.bincount(tick, weights=vals, minlength=duration_s)
        seen = counts > 0
        features[seen, col] = sums[seen] / counts[seen]
    if labels is None:
        labels = np.zeros(duration_s, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (duration_s,):
        raise ValueError(f"expected {duration_s} labels, got {labels.shape[0]}")
    return DatasetTable(np.arange(duration_s, dtype=np.int64), features, labels)


def impute(table: DatasetTable) -> DatasetTable:
    """Forward-fill, then backward-fill the head, then zero-fill empty columns."""
    x = np.array(table.features, dtype=np.float64)
    n = x.shape[0]
    if n == 0:
        return table
    gap = np.isnan(x)
    rows = np.arange(n)[:, None]
    last = np.where(~gap, rows, -1)
    np.maximum.accumulate(last, axis=0, out=last)
    filled = np.take_along_axis(x, np.maximum(last, 0), axis=0)
    filled[last < 0] = np.nan
    # head of each column: first observed value
    has_any = ~gap.all(axis=0)
    first = np.argmax(~gap, axis=0)
    head = np.isnan(filled)
    first_vals = x[first, np.arange(x.shape[1])]
    filled = np.where(head, np.where(has_any, first_vals, 0.0), filled)
    return DatasetTable(table.tick_s, filled, table.labels)


@dataclass(frozen=True)
class Normalizer:
    feature_ids: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=np.float64)
        maxs = np.asarray(self.maxs, dtype=np.float64)
        if mins.shape != maxs.shape or mins.shape != (len(self.feature_ids),):
            raise ValueError("normalizer shape mismatch")
        if np.any(maxs < mins):
            raise ValueError("normalizer needs max >= min in every column")
        object.__setattr__(self, "feature_ids", tuple(self.feature_ids))
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)

    @property
    def span(self):
        return self.maxs - self.mins

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (x - self.mins) / safe, 0.0)

    def invert(self, z):
        return np.asarray(z, dtype=np.float64) * self.span + self.mins

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("feature_id,min,max\n")
            for fid, lo, hi in zip(self.feature_ids, self.mins.tolist(), self.maxs.tolist()):
                fh.write(f"{fid},{lo!r},{hi!r}\n")

    @classmethod
    def load(cls, path) -> "Normalizer":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != ["feature_id", "min", "max"]:
                raise ValueError(f"{path}: not a normalizer file")
            rows = list(reader)
        return cls(tuple(r[0] for r in rows),
                   np.array([float(r[1]) for r in rows]), np.array([float(r[2]) for r in rows]))


def fit_normalizer(table: DatasetTable | np.ndarray, rows=None, feature_ids=None) -> Normalizer:
    x = table.features if isinstance(table, DatasetTable) else np.asarray(table, dtype=np.float64)
    if rows is not None:
        x = x[np.asarray(rows, dtype=np.int64)]
    if x.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on zero rows")
    if feature_ids is None:
        feature_ids = tuple(f"f{j}" for j in range(x.shape[1]))
    return Normalizer(tuple(feature_ids), x.min(axis=0), x.max(axis=0))


def apply_normalizer(norm: Normalizer, table: DatasetTable) -> DatasetTable:
    return DatasetTable(table.tick_s, norm.apply(table.features), table.labels)


def invert_normalizer(norm: Normalizer, table: DatasetTable) -> DatasetTable:
    return DatasetTable(table.tick_s, norm.invert(table.features), table.labels)


class TooFewRowsError(ValueError):
    pass


def window_count(n_rows: int, k: int = DEFAULT_K, m: int = DEFAULT_M, stride: int = 1) -> int:
    usable = n_rows - k - m
    return 0 if usable <= 0 else (usable - 1) // stride + 1


class WindowSet:
    """Sliding windows over a table without copying it.

    Window ``i`` covers rows ``s .. s+k`` with ``s = i*stride``; its target is
    row ``s+k+m`` and its label is that row's label.
    """

    def __init__(self, features, labels, k=DEFAULT_K, m=DEFAULT_M, stride=1):
        if k < 0 or m < 1 or stride < 1:
            raise ValueError("need k >= 0, m >= 1, stride >= 1")
        self.features = np.asarray(features)
        self.source_labels = np.asarray(labels)
        self.k, self.m, self.stride = k, m, stride
        n = self.features.shape[0]
        if n < k + m + 1:
            raise TooFewRowsError(f"need at least k+m+1 = {k + m + 1} rows, got {n}")
        self.starts = np.arange(window_count(n, k, m, stride)) * stride

    def __len__(self):
        return len(self.starts)

    @property
    def end_rows(self):
        """Row index ``t`` of the last input step of each window."""
        return self.starts + self.k

    @property
    def target_rows(self):
        return self.starts + self.k + self.m

    @property
    def targets(self):
        return self.features[self.target_rows]

    @property
    def target_labels(self):
        return self.source_labels[self.target_rows]

    def inputs(self, idx=None):
        """``(len(idx), k+1, d)`` array of windows (all windows if ``idx`` is None)."""
        view = np.lib.stride_tricks.sliding_window_view(self.features, self.k + 1, axis=0)
        starts = self.starts if idx is None else self.starts[np.asarray(idx)]
        return np.ascontiguousarray(view[starts].transpose(0, 2, 1))

    def window(self, i):
        s = int(self.starts[i])
        return self.features[s : s + self.k + 1]


def make_windows(table: DatasetTable | np.ndarray, k=DEFAULT_K, m=DEFAULT_M, stride=1,
                 labels=None) -> WindowSet:
    if isinstance(table, DatasetTable):
        return WindowSet(table.features, table.labels, k, m, stride)
    x = np.asarray(table)
    return WindowSet(x, np.zeros(x.shape[0], np.int64) if labels is None else labels, k, m, stride)


def frames_to_table(frames, schema: Schema, duration_s: int, labels=None) -> DatasetTable:
    return impute(align(frames, schema, duration_s, labels))

