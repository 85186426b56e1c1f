"""Fault injection schedule: episode durations, fault types and stress ramps.

Every sampler takes an explicit random stream (anything with a numpy-style
``random()`` method) so schedules are reproducible from a seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .telemetry import FaultLabel

MIN_DURATION_MIN = 30.0
MAX_DURATION_MIN = 90.0
DEFAULT_LAMBDA_PER_MIN = 1.0 / 45.0

FAULT_TYPE_PROBS = (0.3, 0.5, 0.1, 0.1)
STRESS_PROBABILITY = 0.4

# (start_low, start_high, end_max) per fault type
STRESS_RANGES = {
    FaultLabel.CPU_STRESS: (0.4, 0.9, 1.0),
    FaultLabel.MEMORY_STRESS: (0.25, 0.35, 0.6),
    FaultLabel.PACKET_LOSS: (0.01, 0.03, 0.05),
}

_CUMULATIVE = np.cumsum(FAULT_TYPE_PROBS)


@dataclass(frozen=True)
class StressRamp:
    start_level: float
    end_level: float

    def __post_init__(self):
        if not (0.0 <= self.start_level <= self.end_level <= 1.0):
            raise ValueError(
                f"stress ramp must satisfy 0 <= start <= end <= 1, got "
                f"({self.start_level}, {self.end_level})"
            )


@dataclass(frozen=True)
class FaultEpisode:
    fault_type: FaultLabel
    start_s: int
    duration_s: int
    assignments: Mapping[str, StressRamp] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fault_type", FaultLabel(self.fault_type))
        object.__setattr__(self, "assignments", MappingProxyType(dict(self.assignments)))
        if self.duration_s <= 0:
            raise ValueError("episode duration must be positive")
        if self.fault_type is FaultLabel.NORMAL and self.assignments:
            raise ValueError("a Normal episode cannot stress containers")

    @property
    def end_s(self) -> int:
        return self.start_s + self.duration_s

    @property
    def label(self) -> FaultLabel:
        """Ground truth for every second of the episode.

        An episode where no container drew a stress ramp looks like normal
        operation, so it is labelled Normal.
        """
        return self.fault_type if self.assignments else FaultLabel.NORMAL

    def __eq__(self, other):
        return (
            isinstance(other, FaultEpisode)
            and (self.fault_type, self.start_s, self.duration_s)
            == (other.fault_type, other.start_s, other.duration_s)
            and dict(self.assignments) == dict(other.assignments)
            and list(self.assignments) == list(other.assignments)
        )

    def __hash__(self):
        return hash((self.fault_type, self.start_s, self.duration_s, tuple(self.assignments)))


@dataclass(frozen=True)
class InjectionSchedule:
    episodes: tuple[FaultEpisode, ...]

    def __post_init__(self):
        object.__setattr__(self, "episodes", tuple(self.episodes))
        t = 0
        for k, ep in enumerate(self.episodes):
            if ep.start_s != t:
                raise ValueError(f"episode {k} starts at {ep.start_s}, expected {t}")
            t = ep.end_s

    @property
    def total_duration_s(self) -> int:
        return self.episodes[-1].end_s if self.episodes else 0

    def labels(self) -> np.ndarray:
        """Per-second ground-truth label codes."""
        out = np.empty(self.total_duration_s, dtype=np.int64)
        for ep in self.episodes:
            out[ep.start_s : ep.end_s] = int(ep.label)
        return out

    def episode_at(self, t_s: int) -> FaultEpisode:
        starts = [ep.start_s for ep in self.episodes]
        k = int(np.searchsorted(starts, t_s, side="right")) - 1
        if k < 0 or t_s >= self.total_duration_s:
            raise ValueError(f"time {t_s} s outside schedule [0, {self.total_duration_s})")
        return self.episodes[k]


def duration_from_uniform(u, lambda_per_min=DEFAULT_LAMBDA_PER_MIN):
    """Map ``u`` in [0, 1) to a duration in whole seconds within [1800, 5400].

    Inverse CDF of Exp(lambda) conditioned on the 60-minute window above the
    30-minute floor. Works elementwise on arrays.
    """
    if lambda_per_min <= 0:
        raise ValueError("lambda_per_min must be positive")
    span = MAX_DURATION_MIN - MIN_DURATION_MIN
    mass = -math.expm1(-lambda_per_min * span)
    minutes = -np.log1p(-np.asarray(u, dtype=np.float64) * mass) / lambda_per_min + MIN_DURATION_MIN
    seconds = np.floor(minutes * 60.0).astype(np.int64)
    return np.minimum(seconds, int(MAX_DURATION_MIN * 60))


def truncated_mean_minutes(lambda_per_min=DEFAULT_LAMBDA_PER_MIN) -> float:
    """E[T | 30 <= T <= 90] for T ~ Exp(lambda), in minutes."""
    span = MAX_DURATION_MIN - MIN_DURATION_MIN
    tail = math.exp(-lambda_per_min * span)
    return MIN_DURATION_MIN + 1.0 / lambda_per_min - span * tail / (1.0 - tail)


def sample_duration(rng, lambda_per_min=DEFAULT_LAMBDA_PER_MIN) -> int:
    return int(duration_from_uniform(rng.random(), lambda_per_min))


def fault_type_from_uniform(u):
    """Half-open cumulative intervals in label-code order; elementwise."""
    codes = np.searchsorted(_CUMULATIVE, np.asarray(u, dtype=np.float64), side="right")
    return np.minimum(codes, len(FAULT_TYPE_PROBS) - 1)


def sample_fault_type(rng) -> FaultLabel:
    return FaultLabel(int(fault_type_from_uniform(rng.random())))


def sample_assignments(rng, containers, fault_type) -> dict[str, StressRamp]:
    fault_type = FaultLabel(fault_type)
    if fault_type is FaultLabel.NORMAL:
        return {}
    lo, hi, top = STRESS_RANGES[fault_type]
    out = {}
    for c in containers:
        if rng.random() < STRESS_PROBABILITY:
            start = lo + (hi - lo) * rng.random()
            end = start + (top - start) * rng.random()
            out[c] = StressRamp(start, end)
    return out


def build_schedule(rng, containers, total_duration_s, lambda_per_min=DEFAULT_LAMBDA_PER_MIN):
    if total_duration_s <= 0:
        raise ValueError("total_duration_s must be positive")
    episodes = []
    t = 0
    while t < total_duration_s:
        duration = sample_duration(rng, lambda_per_min)
        fault_type = sample_fault_type(rng)
        assignments = sample_assignments(rng, containers, fault_type)
        duration = min(duration, total_duration_s - t)
        episodes.append(FaultEpisode(fault_type, t, duration, assignments))
        t += duration
    return InjectionSchedule(tuple(episodes))


def stress_at(episode: FaultEpisode, container: str, t_s: int) -> float:
    if not episode.start_s <= t_s < episode.end_s:
        raise ValueError(
            f"t={t_s} s outside episode [{episode.start_s}, {episode.end_s})"
        )
    ramp = episode.assignments.get(container)
    if ramp is None:
        return 0.0
    frac = (t_s - episode.start_s) / episode.duration_s
    return ramp.start_level + (ramp.end_level - ramp.start_level) * frac


def stress_series(episode: FaultEpisode, container: str) -> np.ndarray:
    """Vectorised ``stress_at`` for every second of the episode."""
    ramp = episode.assignments.get(container)
    if ramp is None:
        return np.zeros(episode.duration_s)
    frac = np.arange(episode.duration_s) / episode.duration_s
    return ramp.start_level + (ramp.end_level - ramp.start_level) * frac


SCHEDULE_HEADER = "episode_idx,fault_type,start_s,duration_s,container_id,start_level,end_level"


def write_schedule_csv(schedule: InjectionSchedule, path) -> None:
    lines = [SCHEDULE_HEADER]
    for k, ep in enumerate(schedule.episodes):
        head = f"{k},{int(ep.fault_type)},{ep.start_s},{ep.duration_s}"
        if not ep.assignments:
            lines.append(head + ",,,")
        for c, ramp in ep.assignments.items():
            lines.append(f"{head},{c},{ramp.start_level!r},{ramp.end_level!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_schedule_csv(path) -> InjectionSchedule:
    grouped: dict[int, tuple[int, int, int, dict]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCHEDULE_HEADER.split(","):
            raise ValueError(f"{path}: unexpected schedule header {header}")
        for rowno, row in enumerate(reader, 1):
            if len(row) != 7:
                raise ValueError(f"{path}: row {rowno} has {len(row)} fields, expected 7")
            k, ftype, start, dur = (int(x) for x in row[:4])
            entry = grouped.setdefault(k, (ftype, start, dur, {}))
            if row[4]:
                entry[3][row[4]] = StressRamp(float(row[5]), float(row[6]))
    episodes = [FaultEpisode(FaultLabel(f), s, d, a) for _, (f, s, d, a) in sorted(grouped.items())]
    return InjectionSchedule(tuple(episodes))
