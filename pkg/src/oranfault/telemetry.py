"""Telemetry schema, fault labels and the on-disk dataset/schema formats.

Column ids are ``<node_id>.<metric>``, e.g. ``du0.dl_bitrate`` or
``host.node_cpu_busy_ratio``. Feature order is: RAN columns per DU, platform
columns per container (DUs first, then CUs), then host columns.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

RAN_CADENCE_MS = 100
SCRAPE_CADENCE_MS = 1000


class TelemetryLevel(enum.Enum):
    RAN = "ran"
    PLATFORM = "platform"
    INFRASTRUCTURE = "infrastructure"


class NodeKind(enum.Enum):
    DU = "DU"
    CU = "CU"
    HOST = "Host"


class FaultLabel(enum.IntEnum):
    NORMAL = 0
    CPU_STRESS = 1
    MEMORY_STRESS = 2
    PACKET_LOSS = 3

    @property
    def title(self) -> str:
        return _LABEL_TITLES[self]


_LABEL_TITLES = {
    FaultLabel.NORMAL: "Normal",
    FaultLabel.CPU_STRESS: "CPU Stress",
    FaultLabel.MEMORY_STRESS: "Memory Stress",
    FaultLabel.PACKET_LOSS: "Packet Loss",
}
N_CLASSES = len(FaultLabel)


class CatalogEntry(NamedTuple):
    """How an exported metric relates to the simulator's latent quantity.

    value = offset + scale * ref * driver, where ``family`` names the driver and
    ``ref`` is 1 or a per-container resource cap (``cpu_cap`` cores, ``mem_limit``
    GiB).
    """

    name: str
    unit: str
    family: str
    scale: float = 1.0
    offset: float = 0.0
    ref: str | None = None


RAN_CATALOG = (
    CatalogEntry("active_ues", "count", "ues"),
    CatalogEntry("dl_bitrate_total", "Mbps", "dl_total"),
    CatalogEntry("dl_bitrate_total_max", "Mbps", "dl_total_max"),
    CatalogEntry("dl_bitrate", "Mbps", "dl"),
    CatalogEntry("ul_bitrate", "Mbps", "ul"),
    CatalogEntry("ul_mcs", "index", "ul_mcs"),
    CatalogEntry("dl_mcs", "index", "dl_mcs"),
    CatalogEntry("ul_sinr", "dB", "ul_sinr"),
    CatalogEntry("cqi", "index", "cqi"),
)

# cAdvisor-style container metrics; the default schema uses the first 24.
PLATFORM_CATALOG = (
    CatalogEntry("cpu_usage_ratio", "ratio", "cpu"),
    CatalogEntry("memory_usage_ratio", "ratio", "mem"),
    CatalogEntry("cpu_usage_seconds_rate", "cores", "cpu", ref="cpu_cap"),
    CatalogEntry("memory_working_set", "GiB", "mem", ref="mem_limit"),
    CatalogEntry("network_receive_rate", "Mbps", "net", 0.55),
    CatalogEntry("network_transmit_rate", "Mbps", "net", 0.45),
    CatalogEntry("network_receive_errors_rate", "1/s", "neterr", 0.5),
    CatalogEntry("network_transmit_errors_rate", "1/s", "neterr", 0.3),
    CatalogEntry("cpu_user_seconds_rate", "cores", "cpu", 0.8, ref="cpu_cap"),
    CatalogEntry("cpu_system_seconds_rate", "cores", "cpu", 0.2, ref="cpu_cap"),
    CatalogEntry("cpu_cfs_throttled_ratio", "ratio", "throttle"),
    CatalogEntry("memory_rss", "GiB", "mem", 0.85, ref="mem_limit"),
    CatalogEntry("network_receive_packets_rate", "1/s", "net", 49.0),
    CatalogEntry("network_transmit_packets_rate", "1/s", "net", 40.0),
    CatalogEntry("network_receive_packets_dropped_rate", "1/s", "neterr", 0.8),
    CatalogEntry("network_transmit_packets_dropped_rate", "1/s", "neterr", 0.6),
    CatalogEntry("fs_usage", "GiB", "fs", 1.0, 2.0),
    CatalogEntry("fs_reads_rate", "MB/s", "fs", 0.3),
    CatalogEntry("fs_writes_rate", "MB/s", "fs", 0.7),
    CatalogEntry("load_average_10s", "tasks", "cpu", 1.1, ref="cpu_cap"),
    CatalogEntry("threads", "count", "proc", 1.0, 30.0),
    CatalogEntry("memory_cache", "GiB", "mem", 0.1, 0.2, ref="mem_limit"),
    CatalogEntry("cpu_cfs_throttled_periods_rate", "1/s", "throttle", 10.0),
    CatalogEntry("memory_failcnt_rate", "1/s", "mempress", 5.0),
    CatalogEntry("memory_mapped_file", "GiB", "mem", 0.05, ref="mem_limit"),
    CatalogEntry("memory_swap", "GiB", "mempress", 0.5),
    CatalogEntry("fs_io_time_rate", "s/s", "fs", 0.05),
    CatalogEntry("processes", "count", "proc", 0.3, 4.0),
    CatalogEntry("file_descriptors", "count", "proc", 3.0, 60.0),
    CatalogEntry("sockets", "count", "net", 0.5, 10.0),
    CatalogEntry("load_average_1m", "tasks", "cpu", 1.0, ref="cpu_cap"),
    CatalogEntry("memory_max_usage", "GiB", "mem", 1.05, ref="mem_limit"),
    CatalogEntry("spec_cpu_shares", "shares", "const", 0.0, 1024.0),
    CatalogEntry("tasks_state_running", "count", "cpu", 4.0),
    CatalogEntry("tasks_state_sleeping", "count", "proc", 1.0, 20.0),
    CatalogEntry("fs_limit", "GiB", "const", 0.0, 50.0),
    CatalogEntry("network_tcp_retransmits_rate", "1/s", "neterr", 2.0),
    CatalogEntry("network_udp_drops_rate", "1/s", "neterr", 0.4),
    CatalogEntry("oom_events", "count", "mempress", 0.2),
    CatalogEntry("cpu_schedstat_runqueue_rate", "s/s", "cpu", 0.1, ref="cpu_cap"),
    CatalogEntry("memory_pgfault_rate", "1/s", "mem", 500.0),
)

# node-exporter-style host metrics; the default schema uses the first 40.
HOST_CATALOG = (
    CatalogEntry("node_cpu_busy_ratio", "ratio", "cpu"),
    CatalogEntry("node_memory_used_ratio", "ratio", "mem"),
    CatalogEntry("node_hwmon_temp_celsius", "degC", "temp"),
    CatalogEntry("node_power_watts", "W", "power"),
    CatalogEntry("node_load1", "tasks", "cpu", 54.0),
    CatalogEntry("node_load5", "tasks", "cpu", 50.0),
    CatalogEntry("node_load15", "tasks", "cpu", 45.0),
    CatalogEntry("node_cpu_user_ratio", "ratio", "cpu", 0.75),
    CatalogEntry("node_cpu_system_ratio", "ratio", "cpu", 0.2),
    CatalogEntry("node_cpu_iowait_ratio", "ratio", "disk", 0.001),
    CatalogEntry("node_cpu_idle_ratio", "ratio", "cpu", -1.0, 1.0),
    CatalogEntry("node_cpu_frequency_ghz", "GHz", "temp", -0.02, 4.4),
    CatalogEntry("node_memory_available_gib", "GiB", "mem", -64.0, 64.0),
    CatalogEntry("node_memory_active_gib", "GiB", "mem", 40.0),
    CatalogEntry("node_memory_cached_gib", "GiB", "mem", 4.0, 6.0),
    CatalogEntry("node_vmstat_pgfault_rate", "1/s", "mem", 20000.0),
    CatalogEntry("node_vmstat_pgmajfault_rate", "1/s", "mem", 50.0),
    CatalogEntry("node_network_receive_mbps", "Mbps", "net", 0.5),
    CatalogEntry("node_network_transmit_mbps", "Mbps", "net", 0.5),
    CatalogEntry("node_network_receive_packets_rate", "1/s", "net", 45.0),
    CatalogEntry("node_network_transmit_packets_rate", "1/s", "net", 45.0),
    CatalogEntry("node_network_receive_errs_rate", "1/s", "neterr", 0.5),
    CatalogEntry("node_network_transmit_errs_rate", "1/s", "neterr", 0.3),
    CatalogEntry("node_network_receive_drop_rate", "1/s", "neterr", 0.6),
    CatalogEntry("node_network_transmit_drop_rate", "1/s", "neterr", 0.4),
    CatalogEntry("node_netstat_tcp_retranssegs_rate", "1/s", "neterr", 2.0),
    CatalogEntry("node_disk_read_mbps", "MB/s", "disk", 0.3),
    CatalogEntry("node_disk_written_mbps", "MB/s", "disk", 0.7),
    CatalogEntry("node_disk_io_time_ratio", "ratio", "disk", 0.01),
    CatalogEntry("node_filesystem_avail_gib", "GiB", "disk", -0.01, 400.0),
    CatalogEntry("node_context_switches_rate", "1/s", "cpu", 200000.0),
    CatalogEntry("node_interrupts_rate", "1/s", "cpu", 100000.0),
    CatalogEntry("node_procs_running", "count", "cpu", 30.0),
    CatalogEntry("node_procs_blocked", "count", "disk", 0.5),
    CatalogEntry("node_hwmon_fan_rpm", "rpm", "temp", 40.0),
    CatalogEntry("node_thermal_zone_temp", "degC", "temp", 0.95, 2.0),
    CatalogEntry("node_rapl_package_watts", "W", "power", 0.7),
    CatalogEntry("node_rapl_dram_watts", "W", "mem", 20.0, 5.0),
    CatalogEntry("node_sockstat_tcp_inuse", "count", "net", 2.0, 20.0),
    CatalogEntry("node_entropy_available_bits", "bits", "const", 0.0, 256.0),
    CatalogEntry("node_timex_offset_seconds", "s", "const", 0.0, 0.0),
)


def _catalog_slice(catalog, count, prefix):
    entries = list(catalog[:count])
    # beyond the curated list, pad with baseline-only auxiliary metrics
    for j in range(len(entries), count):
        entries.append(CatalogEntry(f"{prefix}_aux_{j:03d}", "count", "proc", 1.0, 10.0))
    return entries


@dataclass(frozen=True)
class MetricDescriptor:
    id: str
    level: TelemetryLevel
    node_kind: NodeKind
    unit: str
    cadence_ms: int

    def __post_init__(self):
        if self.cadence_ms <= 0:
            raise ValueError(f"{self.id}: cadence_ms must be positive")
        for text in (self.id, self.unit):
            if "," in text or "\n" in text:
                raise ValueError(f"{self.id}: ids and units may not contain ',' or newlines")
        if "." not in self.id:
            raise ValueError(f"metric id {self.id!r} must be '<node>.<metric>'")

    @property
    def node_id(self) -> str:
        return self.id.split(".", 1)[0]

    @property
    def metric(self) -> str:
        return self.id.split(".", 1)[1]


class Schema:
    """Ordered set of metric columns; the order is the feature order."""

    def __init__(self, metrics):
        self.metrics: tuple[MetricDescriptor, ...] = tuple(metrics)
        ids = [m.id for m in self.metrics]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise ValueError(f"duplicate metric id {dup!r}")
        for m in self.metrics:
            expected = RAN_CADENCE_MS if m.level is TelemetryLevel.RAN else SCRAPE_CADENCE_MS
            if m.cadence_ms != expected:
                raise ValueError(f"{m.id}: {m.level.value} metrics use cadence {expected} ms")
        self._index = {m.id: i for i, m in enumerate(self.metrics)}

    @property
    def feature_order(self) -> tuple[str, ...]:
        return tuple(m.id for m in self.metrics)

    def __len__(self):
        return len(self.metrics)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.metrics == other.metrics

    def __hash__(self):
        return hash(self.metrics)

    def index(self, metric_id: str) -> int:
        return self._index[metric_id]

    def __contains__(self, metric_id):
        return metric_id in self._index

    def descriptor(self, metric_id: str) -> MetricDescriptor:
        return self.metrics[self._index[metric_id]]

    def columns_at(self, level: TelemetryLevel) -> list[int]:
        return [i for i, m in enumerate(self.metrics) if m.level is level]

    def nodes(self, kind: NodeKind | None = None) -> list[str]:
        seen: dict[str, None] = {}
        for m in self.metrics:
            if kind is None or m.node_kind is kind:
                seen.setdefault(m.node_id)
        return list(seen)

    def containers(self) -> list[str]:
        """Canonical container order: DUs then CUs, as they appear in the schema."""
        seen: dict[str, None] = {}
        for m in self.metrics:
            if m.level is TelemetryLevel.PLATFORM:
                seen.setdefault(m.node_id)
        return list(seen)

    def to_text(self) -> str:
        return "".join(
            f"{m.id},{m.level.value},{m.node_kind.value},{m.unit},{m.cadence_ms}\n"
            for m in self.metrics
        )

    @classmethod
    def from_text(cls, text: str) -> "Schema":
        metrics = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"schema line {lineno}: expected 5 fields, got {len(parts)}")
            mid, level, kind, unit, cadence = parts
            metrics.append(MetricDescriptor(
                mid, TelemetryLevel(level), NodeKind(kind), unit, int(cadence)
            ))
        return cls(metrics)

    def save(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def catalog_entry(metric_id: str) -> CatalogEntry:
    """Catalog entry behind a column id (used by the simulator)."""
    node, name = metric_id.split(".", 1)
    if node.startswith("du") and node[2:].isdigit():
        pool = RAN_CATALOG + PLATFORM_CATALOG
    elif node.startswith("cu") and node[2:].isdigit():
        pool = PLATFORM_CATALOG
    else:
        pool = HOST_CATALOG
    for entry in pool:
        if entry.name == name:
            return entry
    if "_aux_" in name:
        return CatalogEntry(name, "count", "proc", 1.0, 10.0)
    raise KeyError(metric_id)


def build_default_schema(n_du=4, n_cu=4, platform_metrics_per_container=24,
                         infra_metrics=40) -> Schema:
    counts = dict(n_du=n_du, n_cu=n_cu, platform_metrics_per_container=platform_metrics_per_container,
                  infra_metrics=infra_metrics)
    for name, value in counts.items():
        if int(value) < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    metrics = []
    for d in range(n_du):
        for e in RAN_CATALOG:
            metrics.append(MetricDescriptor(
                f"du{d}.{e.name}", TelemetryLevel.RAN, NodeKind.DU, e.unit, RAN_CADENCE_MS
            ))
    platform = _catalog_slice(PLATFORM_CATALOG, platform_metrics_per_container, "container")
    containers = [(f"du{d}", NodeKind.DU) for d in range(n_du)]
    containers += [(f"cu{c}", NodeKind.CU) for c in range(n_cu)]
    for node, kind in containers:
        for e in platform:
            metrics.append(MetricDescriptor(
                f"{node}.{e.name}", TelemetryLevel.PLATFORM, kind, e.unit, SCRAPE_CADENCE_MS
            ))
    for e in _catalog_slice(HOST_CATALOG, infra_metrics, "node"):
        metrics.append(MetricDescriptor(
            f"host.{e.name}", TelemetryLevel.INFRASTRUCTURE, NodeKind.HOST, e.unit,
            SCRAPE_CADENCE_MS,
        ))
    return Schema(metrics)


SCHEMA_PRESETS = {
    "default": dict(platform_metrics_per_container=24, infra_metrics=40),
    "wide403": dict(platform_metrics_per_container=41, infra_metrics=39),
}


class TelemetryFrame(NamedTuple):
    timestamp_ms: int
    node_id: str
    metric_id: str
    value: float


@dataclass(frozen=True, eq=False)
class DatasetTable:
    """Labelled feature matrix on the 1-second grid.

    ``features`` may contain NaN for gaps before imputation; ``is_complete``
    tells whether the table satisfies the no-missing-values invariant.
    """

    tick_s: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        tick = np.ascontiguousarray(self.tick_s, dtype=np.int64)
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        if not (len(tick) == len(labels) == feats.shape[0]):
            raise ValueError("tick_s, features and labels disagree on the row count")
        if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
            raise ValueError(f"labels must be codes 0..{N_CLASSES - 1}")
        for arr in (tick, feats, labels):
            arr.flags.writeable = False
        object.__setattr__(self, "tick_s", tick)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_columns(self) -> int:
        return self.features.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(np.all(np.isfinite(self.features)))

    def equals(self, other: "DatasetTable", atol=0.0) -> bool:
        return (
            np.array_equal(self.tick_s, other.tick_s)
            and np.array_equal(self.labels, other.labels)
            and self.features.shape == other.features.shape
            and bool(np.all(np.abs(self.features - other.features) <= atol))
        )


class DatasetFormatError(ValueError):
    """Base class for malformed dataset files."""


class HeaderMismatchError(DatasetFormatError):
    pass


class CellParseError(DatasetFormatError):
    pass


class UnknownLabelError(DatasetFormatError):
    pass


class DatasetIOError(OSError):
    pass


def format_value(v: float) -> str:
    return format(float(v), ".9g")


def write_dataset_csv(table: DatasetTable, schema: Schema, path) -> None:
    if table.n_columns != len(schema):
        raise ValueError(f"table has {table.n_columns} columns, schema has {len(schema)}")
    header = "tick_s," + ",".join(schema.feature_order) + ",label\n"
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header)
            for tick, row, label in zip(table.tick_s, table.features, table.labels):
                fh.write(f"{int(tick)},{','.join(map(format_value, row))},{int(label)}\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset {path}: {exc}") from exc


def read_dataset_csv(path, schema: Schema) -> DatasetTable:
    expected = ["tick_s", *schema.feature_order, "label"]
    try:
        fh = open(path, encoding="utf-8", newline="")
    except FileNotFoundError:
        raise
    except OSError as exc:
        raise DatasetIOError(f"cannot read dataset {path}: {exc}") from exc
    ticks, rows, labels = [], [], []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            if header is None:
                raise HeaderMismatchError(f"{path}: empty file, expected a header row")
            if len(header) != len(expected):
                raise HeaderMismatchError(
                    f"{path}: header has {len(header)} columns, expected {len(expected)}"
                )
            col = next(i for i, (a, b) in enumerate(zip(header, expected)) if a != b)
            raise HeaderMismatchError(
                f"{path}: header column {col} is {header[col]!r}, expected {expected[col]!r}"
            )
        n_feat = len(schema)
        for rowno, cells in enumerate(reader, 1):
            if len(cells) != n_feat + 2:
                raise CellParseError(
                    f"{path}: row {rowno} has {len(cells)} cells, expected {n_feat + 2}"
                )
            try:
                ticks.append(int(cells[0]))
            except ValueError:
                raise CellParseError(f"{path}: row {rowno}, column tick_s: {cells[0]!r}") from None
            try:
                values = [float(c) for c in cells[1:-1]]
            except ValueError:
                col = next(j for j, c in enumerate(cells[1:-1]) if not _is_float(c))
                raise CellParseError(
                    f"{path}: row {rowno}, column {schema.feature_order[col]}: "
                    f"non-numeric cell {cells[col + 1]!r}"
                ) from None
            bad = [j for j, v in enumerate(values) if not math.isfinite(v)]
            if bad:
                raise CellParseError(
                    f"{path}: row {rowno}, column {schema.feature_order[bad[0]]}: "
                    f"non-finite value {cells[bad[0] + 1]!r}"
                )
            rows.append(values)
            try:
                code = int(cells[-1])
            except ValueError:
                raise CellParseError(f"{path}: row {rowno}, column label: {cells[-1]!r}") from None
            if not 0 <= code < N_CLASSES:
                raise UnknownLabelError(
                    f"{path}: row {rowno}, column label: unknown label code {code}"
                )
            labels.append(code)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), len(schema))
    return DatasetTable(np.array(ticks, dtype=np.int64), features, np.array(labels, dtype=np.int64))


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False
