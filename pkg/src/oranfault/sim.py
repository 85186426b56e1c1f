"""Synthetic multi-level telemetry for a CU/DU/UE testbed under fault injection.

Telemetry is produced column-wise: each metric is a ``FrameBlock`` holding the
timestamps and values of every observation of that metric. Baseline values are
operating points modulated by the diurnal load plus mean-reverting (AR(1))
noise; ``apply_faults`` then adds the effect of every active stress ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import lfilter

from .injector import InjectionSchedule, stress_series
from .rng import derive
from .telemetry import (
    FaultLabel,
    NodeKind,
    RAN_CADENCE_MS,
    SCHEMA_PRESETS,
    SCRAPE_CADENCE_MS,
    Schema,
    TelemetryFrame,
    TelemetryLevel,
    build_default_schema,
    catalog_entry,
)

SUBSTEPS = SCRAPE_CADENCE_MS // RAN_CADENCE_MS

# smooth diurnal curve: quiet 02:00-06:00, busiest 18:00-22:00
DEFAULT_HOURLY_LOAD = (
    0.35, 0.28, 0.22, 0.20, 0.20, 0.22, 0.30, 0.42, 0.55, 0.62, 0.66, 0.70,
    0.72, 0.70, 0.68, 0.70, 0.76, 0.85, 0.95, 1.00, 0.98, 0.92, 0.70, 0.50,
)


@dataclass(frozen=True)
class Topology:
    pairs: tuple[tuple[str, str, str], ...]
    host_id: str = "host"

    def __post_init__(self):
        ids = [x for p in self.pairs for x in p] + [self.host_id]
        if len(set(ids)) != len(ids):
            raise ValueError("topology ids must be unique")

    @classmethod
    def of_size(cls, n: int) -> "Topology":
        if n < 1:
            raise ValueError("topology needs at least one CU/DU/UE triple")
        return cls(tuple((f"cu{i}", f"du{i}", f"ue{i}") for i in range(n)))

    @property
    def containers(self) -> list[str]:
        return [du for _, du, _ in self.pairs] + [cu for cu, _, _ in self.pairs]

    def pair_of(self, node: str) -> int:
        for i, (cu, du, _) in enumerate(self.pairs):
            if node in (cu, du):
                return i
        raise KeyError(node)


@dataclass(frozen=True)
class TrafficProfile:
    ping_interval_ms: int = 100
    packet_size_resample_s: int = 5
    hourly_load: tuple[float, ...] = DEFAULT_HOURLY_LOAD

    def __post_init__(self):
        load = tuple(float(x) for x in self.hourly_load)
        if len(load) != 24:
            raise ValueError(f"hourly_load needs 24 entries, got {len(load)}")
        if min(load) < 0 or max(load) <= 0:
            raise ValueError("hourly_load must be non-negative with a positive maximum")
        peak = max(load)
        object.__setattr__(self, "hourly_load", tuple(x / peak for x in load))
        if self.ping_interval_ms != RAN_CADENCE_MS:
            raise ValueError(f"ping interval must match the RAN cadence ({RAN_CADENCE_MS} ms)")
        if self.packet_size_resample_s < 1:
            raise ValueError("packet_size_resample_s must be >= 1")


@dataclass(frozen=True)
class FaultEffects:
    """Coefficients of the fault-effect models (all tunable)."""

    cpu_gain: float = 1.0
    throttle_threshold: float = 0.85
    cpu_ran_gain: float = 0.5
    cpu_mcs_drop: float = 6.0
    mem_gain: float = 1.0
    pressure_threshold: float = 0.85
    mem_ran_gain: float = 0.5
    mem_mcs_drop: float = 4.0
    pl_jitter: float = 5.0
    pl_err_gain: float = 400.0
    pl_cqi_drop: float = 60.0
    pl_sinr_drop: float = 200.0
    pl_mcs_drop: float = 100.0
    temp_per_host_cpu: float = 45.0
    power_per_host_cpu: float = 180.0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    duration_s: int = 36000
    n: int = 4
    schema_preset: str = "default"
    noise_scale: float = 1.0
    start_hour: float = 0.0
    effects: FaultEffects = field(default_factory=FaultEffects)
    # resource caps: CU 3 cores / 2 GiB, DU 3 cores / 3 GiB, host 54 cores / 64 GiB
    du_cpu_cap: float = 3.0
    du_mem_gib: float = 3.0
    cu_cpu_cap: float = 3.0
    cu_mem_gib: float = 2.0
    host_cores: float = 54.0
    host_mem_gib: float = 64.0

    def __post_init__(self):
        if self.duration_s < 1:
            raise ValueError("duration_s must be >= 1")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")
        if self.schema_preset not in SCHEMA_PRESETS:
            raise ValueError(
                f"unknown schema preset {self.schema_preset!r}; choose from {sorted(SCHEMA_PRESETS)}"
            )

    @property
    def topology(self) -> Topology:
        return Topology.of_size(self.n)

    @property
    def schema(self) -> Schema:
        return build_default_schema(self.n, self.n, **SCHEMA_PRESETS[self.schema_preset])

    def caps(self, container: str) -> tuple[float, float]:
        if container.startswith("du"):
            return self.du_cpu_cap, self.du_mem_gib
        return self.cu_cpu_cap, self.cu_mem_gib


# Operating points. Bitrates in Mbps.
DL_PEAK = 40.0
UL_FLOOR = 10.0  # saturating uplink iPerf stream
UL_PING_PEAK = 5.0
CPU_IDLE = {"du": 0.22, "cu": 0.12}
CPU_PER_MBPS = {"du": 0.004, "cu": 0.002}
MEM_BASE = {"du": 0.30, "cu": 0.25}
NETERR_BASE = 0.1
HOST_BASE_CORES = 6.0
HOST_BASE_GIB = 12.0
TEMP_IDLE = 35.0
TEMP_TAU_S = 60.0
POWER_IDLE = 110.0
DISK_BASE = 5.0
FS_BASE = 1.0
PROC_BASE = 10.0
RAN_NOMINAL = {"ul_mcs": 20.0, "dl_mcs": 26.0, "ul_sinr": 22.0, "cqi": 13.0}
RAN_NOISE = {"ul_mcs": 1.0, "dl_mcs": 1.0, "ul_sinr": 1.0, "cqi": 0.4}
BITRATE_NOISE = 0.05
# driver noise in driver units, and the per-column share on top of it
FAMILY_NOISE = {
    "cpu": 0.01, "mem": 0.004, "net": 0.8, "neterr": 0.03, "fs": 0.05, "proc": 0.3,
    "disk": 0.3, "temp": 0.15, "power": 2.0, "throttle": 0.0, "mempress": 0.0, "const": 0.0,
}
HOST_FAMILY_NOISE = {"cpu": 0.002, "mem": 0.001}
COLUMN_NOISE_SHARE = 0.2
OU_THETA_FAST = 0.2
OU_THETA_SLOW = 0.01


class FrameBlock(NamedTuple):
    """All observations of one metric column."""

    metric_id: str
    node_id: str
    timestamps_ms: np.ndarray
    values: np.ndarray


def iter_frames(blocks) -> Iterator[TelemetryFrame]:
    for b in blocks:
        for ts, v in zip(b.timestamps_ms.tolist(), b.values.tolist()):
            yield TelemetryFrame(ts, b.node_id, b.metric_id, v)


def ou_noise(rng, n_steps, theta, size=()):
    """Stationary-scale AR(1) noise started at 0, unit stationary variance."""
    shape = (n_steps, *np.atleast_1d(size)) if size != () else (n_steps,)
    eps = rng.standard_normal(shape) * math.sqrt(1.0 - (1.0 - theta) ** 2)
    return lfilter([1.0], [1.0, -(1.0 - theta)], eps, axis=0)


def lowpass(x, tau_steps, initial=0.0):
    """First-order low-pass with unit DC gain, starting from ``initial``."""
    alpha = 1.0 / tau_steps
    zi = np.array([(1.0 - alpha) * initial])
    y, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, zi=zi)
    return y


def _trailing_max(x, width):
    # causal window: element t sees x[t-width+1 .. t]
    return maximum_filter1d(x, size=width, origin=(width - 1) // 2, mode="nearest")


def _load_curve(profile: TrafficProfile, start_hour, n_fine):
    hours = (start_hour + np.arange(n_fine) * (RAN_CADENCE_MS / 3.6e6)) % 24.0
    table = np.array(profile.hourly_load + profile.hourly_load[:1])
    return np.interp(hours, np.arange(25.0), table)


def _cpu_ref(config: SimConfig, container: str) -> float:
    kind = container[:2]
    mean_traffic = 0.5 * (DL_PEAK + UL_PING_PEAK) + UL_FLOOR
    return CPU_IDLE[kind] + CPU_PER_MBPS[kind] * mean_traffic


def generate_baseline(config: SimConfig, profile: TrafficProfile, rng) -> list[FrameBlock]:
    """Fault-free telemetry at native cadences, one block per schema column."""
    schema = config.schema
    topo = config.topology
    ns = config.noise_scale
    n_sec = config.duration_s
    n_fine = n_sec * SUBSTEPS
    ts_fine = np.arange(n_fine, dtype=np.int64) * RAN_CADENCE_MS
    ts_sec = np.arange(n_sec, dtype=np.int64) * SCRAPE_CADENCE_MS
    load = _load_curve(profile, config.start_hour, n_fine)

    ran: dict[str, dict[str, np.ndarray]] = {}
    served_sec: dict[int, np.ndarray] = {}
    block_len = profile.packet_size_resample_s * SUBSTEPS
    for i, (_, du, _) in enumerate(topo.pairs):
        n_blocks = -(-n_fine // block_len)
        size_factor = 1.0 + ns * (rng.random(n_blocks) - 0.5)
        ping = np.repeat(size_factor, block_len)[:n_fine]
        noise = ou_noise(rng, n_fine, OU_THETA_FAST, size=6) * ns
        dl = np.maximum(DL_PEAK * load * ping * (1.0 + BITRATE_NOISE * noise[:, 0]), 0.0)
        ul = np.maximum(UL_FLOOR + UL_PING_PEAK * load * ping + 0.5 * noise[:, 1], 0.0)
        dl_total = dl * 1.02 + 0.3
        drivers = {
            "ues": np.ones(n_fine),
            "dl": dl,
            "ul": ul,
            "dl_total": dl_total,
            "dl_total_max": _trailing_max(dl_total, 10 * SUBSTEPS),
        }
        for j, name in enumerate(("ul_mcs", "dl_mcs", "ul_sinr", "cqi")):
            drivers[name] = RAN_NOMINAL[name] + RAN_NOISE[name] * noise[:, 2 + j]
        drivers["cqi"] = np.clip(drivers["cqi"], 0.0, 15.0)
        drivers["ul_mcs"] = np.maximum(drivers["ul_mcs"], 0.0)
        drivers["dl_mcs"] = np.maximum(drivers["dl_mcs"], 0.0)
        ran[du] = drivers
        served_sec[i] = (dl + ul).reshape(n_sec, SUBSTEPS).mean(axis=1)

    container_drivers: dict[str, dict[str, np.ndarray]] = {}
    for c in topo.containers:
        kind = c[:2]
        traffic = served_sec[topo.pair_of(c)]
        noise = ou_noise(rng, n_sec, OU_THETA_FAST, size=5) * ns
        slow = ou_noise(rng, n_sec, OU_THETA_SLOW) * ns
        container_drivers[c] = {
            "cpu": np.clip(CPU_IDLE[kind] + CPU_PER_MBPS[kind] * traffic
                           + FAMILY_NOISE["cpu"] * noise[:, 0], 0.0, 1.0),
            "mem": np.clip(MEM_BASE[kind] + FAMILY_NOISE["mem"] * slow, 0.0, 1.0),
            "net": np.maximum(traffic + FAMILY_NOISE["net"] * noise[:, 1], 0.0),
            "neterr": np.maximum(NETERR_BASE + FAMILY_NOISE["neterr"] * noise[:, 2], 0.0),
            "fs": np.maximum(FS_BASE + FAMILY_NOISE["fs"] * noise[:, 3], 0.0),
            "proc": np.maximum(PROC_BASE + FAMILY_NOISE["proc"] * noise[:, 4], 0.0),
            "throttle": np.zeros(n_sec),
            "mempress": np.zeros(n_sec),
            "const": np.zeros(n_sec),
        }

    noise = ou_noise(rng, n_sec, OU_THETA_FAST, size=5) * ns
    busy = HOST_BASE_CORES + sum(
        config.caps(c)[0] * d["cpu"] for c, d in container_drivers.items()
    )
    used = HOST_BASE_GIB + sum(
        config.caps(c)[1] * d["mem"] for c, d in container_drivers.items()
    )
    host_cpu = np.clip(busy / config.host_cores + HOST_FAMILY_NOISE["cpu"] * noise[:, 0], 0, 1)
    host_mem = np.clip(used / config.host_mem_gib + HOST_FAMILY_NOISE["mem"] * noise[:, 1], 0, 1)
    fx = config.effects
    temp_target = TEMP_IDLE + fx.temp_per_host_cpu * host_cpu
    host = {
        "cpu": host_cpu,
        "mem": host_mem,
        "net": sum(d["net"] for d in container_drivers.values()),
        "neterr": sum(d["neterr"] for d in container_drivers.values()),
        "disk": np.maximum(DISK_BASE + FAMILY_NOISE["disk"] * noise[:, 2], 0.0),
        "temp": lowpass(temp_target, TEMP_TAU_S, initial=temp_target[0])
        + FAMILY_NOISE["temp"] * noise[:, 3],
        "power": POWER_IDLE + fx.power_per_host_cpu * host_cpu + FAMILY_NOISE["power"] * noise[:, 4],
        "proc": np.full(n_sec, PROC_BASE),
        "const": np.zeros(n_sec),
    }

    blocks = []
    col_noise = ou_noise(rng, n_sec, OU_THETA_FAST, size=len(schema)) * ns
    for k, m in enumerate(schema.metrics):
        entry = catalog_entry(m.id)
        if m.level is TelemetryLevel.RAN:
            blocks.append(FrameBlock(m.id, m.node_id, ts_fine, ran[m.node_id][entry.family]))
            continue
        if m.level is TelemetryLevel.PLATFORM:
            driver = container_drivers[m.node_id][entry.family]
        else:
            driver = host[entry.family]
        gain = entry.scale * _ref_value(config, m.node_id, entry.ref)
        sigma = COLUMN_NOISE_SHARE * FAMILY_NOISE.get(entry.family, 0.0) * abs(gain)
        values = entry.offset + gain * driver + sigma * col_noise[:, k]
        blocks.append(FrameBlock(m.id, m.node_id, ts_sec, np.maximum(values, 0.0)))
    return blocks


def _ref_value(config: SimConfig, node: str, ref: str | None) -> float:
    if ref is None:
        return 1.0
    cpu_cap, mem_gib = config.caps(node)
    return {"cpu_cap": cpu_cap, "mem_limit": mem_gib}[ref]


class ScheduleMismatchError(ValueError):
    pass


def stress_arrays(schedule: InjectionSchedule, containers, duration_s):
    """Per-container stress level per second, split by fault type."""
    out = {t: {c: np.zeros(duration_s) for c in containers}
           for t in (FaultLabel.CPU_STRESS, FaultLabel.MEMORY_STRESS, FaultLabel.PACKET_LOSS)}
    for ep in schedule.episodes:
        if ep.fault_type is FaultLabel.NORMAL:
            continue
        for c in ep.assignments:
            if c not in out[ep.fault_type]:
                raise ScheduleMismatchError(f"schedule stresses unknown container {c!r}")
            out[ep.fault_type][c][ep.start_s : ep.end_s] = stress_series(ep, c)
    return out


def apply_faults(baseline, schedule: InjectionSchedule, config: SimConfig) -> list[FrameBlock]:
    """Add the telemetry signature of every scheduled stress ramp.

    Effects are additive or multiplicative terms that vanish at zero stress, so
    seconds without stress are left bit-identical.
    """
    n_sec = config.duration_s
    if schedule.total_duration_s != n_sec:
        raise ScheduleMismatchError(
            f"schedule covers {schedule.total_duration_s} s but the stream lasts {n_sec} s"
        )
    topo = config.topology
    fx = config.effects
    stress = stress_arrays(schedule, topo.containers, n_sec)
    s_cpu = stress[FaultLabel.CPU_STRESS]
    s_mem = stress[FaultLabel.MEMORY_STRESS]
    s_pl = stress[FaultLabel.PACKET_LOSS]

    delta: dict[str, dict[str, np.ndarray]] = {}
    net_factor: dict[str, np.ndarray] = {}
    for c in topo.containers:
        cpu_ref = _cpu_ref(config, c)
        d_cpu = fx.cpu_gain * s_cpu[c] * (1.0 - cpu_ref)
        cpu_excess = np.where(
            s_cpu[c] > 0,
            np.maximum(cpu_ref + d_cpu - fx.throttle_threshold, 0.0) / (1.0 - fx.throttle_threshold),
            0.0,
        )
        d_mem = fx.mem_gain * s_mem[c]
        mem_excess = np.where(
            s_mem[c] > 0,
            np.maximum(MEM_BASE[c[:2]] + d_mem - fx.pressure_threshold, 0.0)
            / (1.0 - fx.pressure_threshold),
            0.0,
        )
        delta[c] = {
            "cpu": d_cpu,
            "throttle": np.minimum(cpu_excess, 1.0),
            "mem": d_mem,
            "mempress": np.minimum(mem_excess, 1.0),
            "neterr": fx.pl_err_gain * s_pl[c],
        }
        net_factor[c] = 1.0 - s_pl[c]

    cpu_caps = {c: config.caps(c)[0] for c in topo.containers}
    mem_caps = {c: config.caps(c)[1] for c in topo.containers}
    d_host_cpu = sum(cpu_caps[c] * delta[c]["cpu"] for c in topo.containers) / config.host_cores
    d_host_mem = sum(mem_caps[c] * delta[c]["mem"] for c in topo.containers) / config.host_mem_gib
    host_delta = {
        "cpu": d_host_cpu,
        "mem": d_host_mem,
        "neterr": sum(delta[c]["neterr"] for c in topo.containers),
        "temp": lowpass(fx.temp_per_host_cpu * d_host_cpu, TEMP_TAU_S),
        "power": fx.power_per_host_cpu * d_host_cpu,
    }

    jitter_rng = derive(config.seed, "fault-jitter")
    ran_effects = {}
    for i, (cu, du, _) in enumerate(topo.pairs):
        pair = (du, cu)
        jitter = jitter_rng.standard_normal((n_sec * SUBSTEPS, 2))
        factor = np.ones(n_sec * SUBSTEPS)
        mcs_drop = np.zeros(n_sec)
        stressed = np.zeros(n_sec, dtype=bool)
        for j, c in enumerate(pair):
            pl = np.repeat(s_pl[c], SUBSTEPS)
            factor = factor * np.maximum((1.0 - pl) * (1.0 + fx.pl_jitter * pl * jitter[:, j]), 0.0)
            degrade = (1.0 - fx.cpu_ran_gain * delta[c]["throttle"]) * (
                1.0 - fx.mem_ran_gain * delta[c]["mempress"]
            )
            factor = factor * np.repeat(np.clip(degrade, 0.0, 1.0), SUBSTEPS)
            mcs_drop = mcs_drop + (fx.cpu_mcs_drop * delta[c]["throttle"]
                                   + fx.mem_mcs_drop * delta[c]["mempress"]
                                   + fx.pl_mcs_drop * s_pl[c])
            stressed |= (s_cpu[c] > 0) | (s_mem[c] > 0) | (s_pl[c] > 0)
        pl_pair = s_pl[du] + s_pl[cu]
        ran_effects[du] = {
            "factor": factor,
            "mcs_drop": np.repeat(mcs_drop, SUBSTEPS),
            "sinr_drop": np.repeat(fx.pl_sinr_drop * pl_pair, SUBSTEPS),
            "cqi_drop": np.repeat(fx.pl_cqi_drop * pl_pair, SUBSTEPS),
            "any": np.repeat(stressed, SUBSTEPS),
        }

    out = []
    by_id = {b.metric_id: b for b in baseline}
    for b in baseline:
        entry = catalog_entry(b.metric_id)
        node = b.node_id
        v = b.values
        if node in ran_effects and entry.family in (
            "dl", "ul", "dl_total", "dl_total_max", "ul_mcs", "dl_mcs", "ul_sinr", "cqi"
        ):
            eff = ran_effects[node]
            if not eff["any"].any():
                out.append(b)
                continue
            fam = entry.family
            if fam in ("dl", "ul", "dl_total"):
                v = v * eff["factor"]
            elif fam == "dl_total_max":
                total = by_id[f"{node}.dl_bitrate_total"].values * eff["factor"]
                v = np.where(eff["any"], _trailing_max(total, 10 * SUBSTEPS), v)
            elif fam in ("ul_mcs", "dl_mcs"):
                v = np.maximum(v - eff["mcs_drop"], 0.0)
            elif fam == "ul_sinr":
                v = v - eff["sinr_drop"]
            else:
                v = np.clip(v - eff["cqi_drop"], 0.0, 15.0)
        elif node in delta:
            gain = entry.scale * _ref_value(config, node, entry.ref)
            if entry.family in delta[node]:
                v = v + gain * delta[node][entry.family]
            elif entry.family == "net":
                v = entry.offset + (v - entry.offset) * net_factor[node]
        elif node == topo.host_id and entry.family in host_delta:
            v = v + entry.scale * host_delta[entry.family]
        out.append(FrameBlock(b.metric_id, node, b.timestamps_ms, v))
    return out


def run_simulation(config: SimConfig, profile: TrafficProfile, schedule: InjectionSchedule):
    """Baseline plus fault effects; returns ``(frames, per-second labels)``."""
    if schedule.total_duration_s != config.duration_s:
        raise ScheduleMismatchError(
            f"schedule covers {schedule.total_duration_s} s, config asks for {config.duration_s} s"
        )
    baseline = generate_baseline(config, profile, derive(config.seed, "baseline"))
    return apply_faults(baseline, schedule, config), schedule.labels()


def write_frames_csv(blocks, path) -> None:
    """Optional raw dump, ``timestamp_ms,node_id,metric_id,value``, time-ordered."""
    rows = []
    for b in blocks:
        for ts, v in zip(b.timestamps_ms.tolist(), b.values.tolist()):
            rows.append((ts, b.node_id, b.metric_id, v))
    rows.sort(key=lambda r: r[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("timestamp_ms,node_id,metric_id,value\n")
        for ts, node, mid, v in rows:
            fh.write(f"{ts},{node},{mid},{format(v, '.9g')}\n")
