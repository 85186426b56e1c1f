import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oranfault.injector import FaultEpisode, InjectionSchedule, StressRamp, build_schedule
from oranfault.rng import derive
from oranfault.sim import (
    ScheduleMismatchError,
    SimConfig,
    Topology,
    TrafficProfile,
    apply_faults,
    generate_baseline,
    iter_frames,
    run_simulation,
    write_frames_csv,
)
from oranfault.telemetry import FaultLabel, TelemetryLevel

FLAT = TrafficProfile(hourly_load=(1.0,) * 24)


def baseline(config, profile=FLAT):
    return generate_baseline(config, profile, derive(config.seed, "baseline"))


def one_episode(duration, fault=FaultLabel.NORMAL, **ramps):
    assignments = {c: StressRamp(*r) for c, r in ramps.items()}
    return InjectionSchedule((FaultEpisode(fault, 0, duration, assignments),))


def column(blocks, metric_id):
    return next(b.values for b in blocks if b.metric_id == metric_id)


def test_topology():
    t = Topology.of_size(4)
    assert t.containers == ["du0", "du1", "du2", "du3", "cu0", "cu1", "cu2", "cu3"]
    assert t.pair_of("cu2") == t.pair_of("du2") == 2
    with pytest.raises(ValueError):
        Topology.of_size(0)
    with pytest.raises(ValueError):
        Topology((("a", "b", "c"), ("a", "d", "e")))


def test_traffic_profile_normalised():
    p = TrafficProfile(hourly_load=tuple(range(1, 25)))
    assert max(p.hourly_load) == 1.0 and p.hourly_load[0] == pytest.approx(1 / 24)
    with pytest.raises(ValueError, match="24"):
        TrafficProfile(hourly_load=(1.0,) * 23)
    with pytest.raises(ValueError):
        TrafficProfile(hourly_load=(0.0,) * 24)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(duration_s=0)
    with pytest.raises(ValueError):
        SimConfig(noise_scale=-1)


def test_one_second_cadence():
    cfg = SimConfig(duration_s=1, n=1)
    blocks = baseline(cfg)
    assert len(blocks) == len(cfg.schema)
    for b, m in zip(blocks, cfg.schema.metrics):
        assert b.metric_id == m.id
        expected = 10 if m.level is TelemetryLevel.RAN else 1
        assert len(b.values) == expected
    assert len(list(iter_frames(blocks))) == 9 * 10 + (len(cfg.schema) - 9)


def test_timestamps_on_cadence_grid():
    cfg = SimConfig(duration_s=30, n=2)
    for b, m in zip(baseline(cfg), cfg.schema.metrics):
        ts = b.timestamps_ms
        assert np.all(ts % m.cadence_ms == 0)
        assert np.all(np.diff(ts) == m.cadence_ms)
        assert ts[0] == 0 and ts[-1] < 30_000


def test_noise_free_constant_load_is_constant():
    cfg = SimConfig(duration_s=120, n=1, noise_scale=0.0)
    for b in baseline(cfg):
        tail = b.values[len(b.values) // 6 :]
        assert np.ptp(tail) <= 1e-9 * max(1.0, abs(tail[0])), b.metric_id


def test_baseline_is_deterministic():
    cfg = SimConfig(duration_s=60, n=2, seed=7)
    a, b = baseline(cfg), baseline(cfg)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    other = baseline(SimConfig(duration_s=60, n=2, seed=8))
    assert not all(np.array_equal(x.values, y.values) for x, y in zip(a, other))


def test_normal_episode_is_identity():
    cfg = SimConfig(duration_s=200, n=1)
    base = baseline(cfg)
    out = apply_faults(base, one_episode(200), cfg)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(base, out))


def test_duration_mismatch():
    cfg = SimConfig(duration_s=100, n=1)
    with pytest.raises(ScheduleMismatchError):
        apply_faults(baseline(cfg), one_episode(99), cfg)
    with pytest.raises(ScheduleMismatchError):
        run_simulation(cfg, FLAT, one_episode(101))
    with pytest.raises(ScheduleMismatchError, match="du7"):
        apply_faults(baseline(cfg), one_episode(100, FaultLabel.CPU_STRESS, du7=(0.5, 0.6)), cfg)


def test_cpu_stress_raises_cpu():
    cfg = SimConfig(duration_s=600, n=1)
    base = baseline(cfg)
    out = apply_faults(base, one_episode(600, FaultLabel.CPU_STRESS, du0=(0.9, 1.0)), cfg)
    for mid in ("du0.cpu_usage_ratio", "host.node_cpu_busy_ratio", "host.node_hwmon_temp_celsius"):
        assert column(out, mid).mean() > column(base, mid).mean()
    assert column(out, "du0.dl_bitrate").mean() < column(base, "du0.dl_bitrate").mean()
    assert np.array_equal(column(out, "cu0.cpu_usage_ratio"), column(base, "cu0.cpu_usage_ratio"))


def test_memory_stress_raises_memory():
    cfg = SimConfig(duration_s=600, n=1)
    base = baseline(cfg)
    out = apply_faults(base, one_episode(600, FaultLabel.MEMORY_STRESS, cu0=(0.6, 0.9)), cfg)
    assert column(out, "cu0.memory_usage_ratio").mean() > column(base, "cu0.memory_usage_ratio").mean()
    assert column(out, "cu0.memory_failcnt_rate").mean() > 0


def test_small_packet_loss_lowers_bitrate():
    cfg = SimConfig(duration_s=600, n=1)
    base = baseline(cfg)
    out = apply_faults(base, one_episode(600, FaultLabel.PACKET_LOSS, du0=(0.03, 0.03)), cfg)
    assert column(out, "du0.dl_bitrate").mean() < column(base, "du0.dl_bitrate").mean()
    assert column(out, "du0.network_receive_errors_rate").mean() > column(
        base, "du0.network_receive_errors_rate").mean()


@settings(max_examples=10, deadline=None)
@given(
    st.sampled_from([FaultLabel.CPU_STRESS, FaultLabel.MEMORY_STRESS, FaultLabel.PACKET_LOSS]),
    st.floats(0.01, 0.5),
    st.floats(0.01, 0.45),
)
def test_effects_are_monotone_in_stress(fault, s1, gap):
    s2 = s1 + gap
    cfg = SimConfig(duration_s=300, n=1, seed=3)
    base = baseline(cfg)
    low = apply_faults(base, one_episode(300, fault, du0=(s1, s1)), cfg)
    high = apply_faults(base, one_episode(300, fault, du0=(s2, s2)), cfg)
    mid, sign = {
        FaultLabel.CPU_STRESS: ("du0.cpu_usage_ratio", 1),
        FaultLabel.MEMORY_STRESS: ("du0.memory_usage_ratio", 1),
        FaultLabel.PACKET_LOSS: ("du0.dl_bitrate", -1),
    }[fault]
    assert sign * (column(high, mid).mean() - column(low, mid).mean()) > 0


def test_values_finite_and_non_negative():
    cfg = SimConfig(duration_s=3600, n=4, seed=11)
    schedule = build_schedule(derive(11, "schedule"), cfg.topology.containers, 3600)
    frames, _ = run_simulation(cfg, TrafficProfile(), schedule)
    for b in frames:
        assert np.all(np.isfinite(b.values)), b.metric_id
        if "bitrate" in b.metric_id or b.metric_id.endswith("_ratio"):
            assert b.values.min() >= 0, b.metric_id


def test_labels_follow_schedule():
    cfg = SimConfig(duration_s=7200)
    schedule = build_schedule(derive(cfg.seed, "schedule"), cfg.topology.containers, 7200)
    frames, labels = run_simulation(cfg, TrafficProfile(), schedule)
    want = np.zeros(4, dtype=int)
    for e in schedule.episodes:
        want[int(e.label)] += e.duration_s
    assert np.array_equal(np.bincount(labels, minlength=4), want)
    again, labels2 = run_simulation(cfg, TrafficProfile(), schedule)
    assert np.array_equal(labels, labels2)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(frames, again))


def test_all_normal_schedule_gives_normal_labels():
    cfg = SimConfig(duration_s=50, n=1)
    _, labels = run_simulation(cfg, FLAT, one_episode(50))
    assert np.all(labels == 0)


def test_raw_frame_dump(tmp_path):
    cfg = SimConfig(duration_s=2, n=1)
    write_frames_csv(baseline(cfg), tmp_path / "frames.csv")
    lines = (tmp_path / "frames.csv").read_text().splitlines()
    assert lines[0] == "timestamp_ms,node_id,metric_id,value"
    assert len(lines) - 1 == 9 * 20 + (len(cfg.schema) - 9) * 2
    ts = [int(line.split(",")[0]) for line in lines[1:]]
    assert ts == sorted(ts)
