import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oranfault.injector import (
    STRESS_RANGES,
    FaultEpisode,
    InjectionSchedule,
    StressRamp,
    build_schedule,
    duration_from_uniform,
    fault_type_from_uniform,
    read_schedule_csv,
    sample_assignments,
    sample_duration,
    sample_fault_type,
    stress_at,
    write_schedule_csv,
)
from oranfault.rng import derive
from oranfault.telemetry import FaultLabel

CONTAINERS = [f"du{i}" for i in range(4)] + [f"cu{i}" for i in range(4)]


class Scripted:
    """Stand-in random stream returning a fixed sequence of uniforms."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def test_duration_bounds():
    assert duration_from_uniform(0.0) == 1800
    assert 5399 <= duration_from_uniform(np.nextafter(1.0, 0.0)) <= 5400
    with pytest.raises(ValueError):
        duration_from_uniform(0.5, 0.0)


def test_fault_type_intervals():
    assert fault_type_from_uniform(0.0) == 0
    assert fault_type_from_uniform(0.3) == 1
    assert fault_type_from_uniform(0.8) == 2
    assert fault_type_from_uniform(0.9) == 3
    assert fault_type_from_uniform(np.nextafter(0.3, 0)) == 0
    assert fault_type_from_uniform(np.nextafter(1.0, 0)) == 3
    assert sample_fault_type(Scripted([0.85])) is FaultLabel.MEMORY_STRESS


def test_normal_consumes_no_draws():
    rng = Scripted([])
    assert sample_assignments(rng, CONTAINERS, FaultLabel.NORMAL) == {}


def test_cpu_start_lower_bound():
    out = sample_assignments(Scripted([0.0, 0.0, 0.5]), ["du0"], FaultLabel.CPU_STRESS)
    assert out["du0"].start_level == 0.4
    assert out["du0"].end_level == pytest.approx(0.7)


def test_not_stressed_when_bernoulli_fails():
    assert sample_assignments(Scripted([0.4]), ["du0"], FaultLabel.CPU_STRESS) == {}


def test_stressed_fraction():
    rng = derive(1, "bern")
    hits = sum(len(sample_assignments(rng, CONTAINERS, FaultLabel.PACKET_LOSS)) for _ in range(100_000 // 8))
    assert abs(hits / (100_000 // 8 * 8) - 0.4) < 0.01


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_episode_ranges(seed):
    rng = derive(seed, "ep")
    d = sample_duration(rng)
    assert 1800 <= d <= 5400
    ftype = sample_fault_type(rng)
    for ramp in sample_assignments(rng, CONTAINERS, ftype).values():
        lo, hi, top = STRESS_RANGES[ftype]
        assert lo <= ramp.start_level <= hi
        assert ramp.start_level <= ramp.end_level <= top


def test_stress_at():
    ep = FaultEpisode(FaultLabel.CPU_STRESS, 100, 1000, {"du0": StressRamp(0.4, 0.8)})
    assert stress_at(ep, "du0", 100) == 0.4
    assert stress_at(ep, "du0", 600) == pytest.approx(0.6)
    assert stress_at(ep, "cu0", 600) == 0.0
    with pytest.raises(ValueError):
        stress_at(ep, "du0", 1100)
    with pytest.raises(ValueError):
        stress_at(ep, "du0", 99)


def test_episode_invariants():
    with pytest.raises(ValueError):
        StressRamp(0.5, 0.4)
    with pytest.raises(ValueError):
        FaultEpisode(FaultLabel.NORMAL, 0, 10, {"du0": StressRamp(0.1, 0.2)})
    with pytest.raises(ValueError):
        InjectionSchedule((FaultEpisode(FaultLabel.NORMAL, 5, 10),))
    empty = FaultEpisode(FaultLabel.CPU_STRESS, 0, 10)
    assert empty.label is FaultLabel.NORMAL


def test_short_total_is_one_clipped_episode():
    for seed in range(20):
        s = build_schedule(derive(seed, "s"), CONTAINERS, 1800)
        assert len(s.episodes) == 1 and s.episodes[0].duration_s == 1800


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40_000))
def test_schedule_tiles_timeline(seed, total):
    s = build_schedule(derive(seed, "s"), CONTAINERS, total)
    assert s.total_duration_s == total
    assert sum(e.duration_s for e in s.episodes) == total
    assert all(a.end_s == b.start_s for a, b in zip(s.episodes, s.episodes[1:]))
    labels = s.labels()
    assert labels.shape == (total,)
    for e in s.episodes:
        assert np.all(labels[e.start_s : e.end_s] == int(e.label))


def test_schedule_is_deterministic():
    a = build_schedule(derive(5, "s"), CONTAINERS, 30_000)
    b = build_schedule(derive(5, "s"), CONTAINERS, 30_000)
    assert a == b


def test_label_mass_ordering():
    s = build_schedule(derive(0, "mass"), CONTAINERS, 500 * 3600)
    assert len(s.episodes) >= 500
    mass = np.bincount(s.labels(), minlength=4)
    assert mass[1] > mass[0] > max(mass[2], mass[3])


def test_schedule_csv_round_trip(tmp_path):
    s = build_schedule(derive(9, "s"), CONTAINERS, 20_000)
    write_schedule_csv(s, tmp_path / "schedule.csv")
    assert read_schedule_csv(tmp_path / "schedule.csv") == s
