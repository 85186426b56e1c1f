"""Run configuration read from a sectioned INI file.

Every key is optional; unknown sections or keys are rejected so that typos do
not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .forest import ForestParams
from .injector import DEFAULT_LAMBDA_PER_MIN
from .lstm import TrainConfig
from .pipeline import PipelineConfig
from .sim import FaultEffects, SimConfig, TrafficProfile


class ConfigError(ValueError):
    pass


# Defaults for an end-to-end run. The forecaster trains for 4 epochs here
# (instead of the library default of 50) to keep a 5-fold run on one core
# within minutes; loss has already dropped several-fold by then.
RUN_EPOCHS = 4


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    sim: SimConfig = field(default_factory=SimConfig)
    traffic: TrafficProfile = field(default_factory=TrafficProfile)
    lambda_per_min: float = DEFAULT_LAMBDA_PER_MIN
    pipeline: PipelineConfig = field(
        default_factory=lambda: PipelineConfig(train=TrainConfig(epochs=RUN_EPOCHS))
    )
    workdir: str = "."

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed, sim=dataclasses.replace(self.sim, seed=seed))

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section, values in _sections(self).items():
            parser[section] = {k: _render(v) for k, v in values.items()}
        lines = []
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in parser[section].items())
            lines.append("")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()


_SIM_KEYS = ("duration_s", "n", "schema_preset", "noise_scale", "start_hour", "du_cpu_cap",
             "du_mem_gib", "cu_cpu_cap", "cu_mem_gib", "host_cores", "host_mem_gib")
_TRAIN_KEYS = ("epochs", "batch_size", "learning_rate", "gradient_clip_norm", "beta1", "beta2", "eps")
_FOREST_KEYS = {"n_trees": "n_trees", "max_depth": "max_depth",
                "min_samples_split": "min_samples_split", "max_features": "max_features"}
_PIPE_KEYS = ("k", "m", "pca_r", "hidden_size", "n_layers", "adaboost_rounds", "run_baseline")


def _sections(cfg: RunConfig) -> dict[str, dict[str, object]]:
    p = cfg.pipeline
    return {
        "run": {"seed": cfg.seed},
        "simulation": {**{k: getattr(cfg.sim, k) for k in _SIM_KEYS},
                       "lambda_per_min": cfg.lambda_per_min},
        "effects": dataclasses.asdict(cfg.sim.effects),
        "traffic": {"packet_size_resample_s": cfg.traffic.packet_size_resample_s,
                    "hourly_load": cfg.traffic.hourly_load},
        "pipeline": {**{k: getattr(p, k) for k in _PIPE_KEYS},
                     **{k: getattr(p.train, k) for k in _TRAIN_KEYS},
                     **{k: getattr(p.forest, a) for k, a in _FOREST_KEYS.items()}},
        "evaluation": {"k_folds": p.k_folds, "split": p.split},
        "paths": {"workdir": cfg.workdir},
    }


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    return str(v)


def _parse(text: str, like, where: str):
    text = text.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            return tuple(float(x) for x in text.split(","))
    except ValueError:
        kind = "boolean" if isinstance(like, bool) else type(like).__name__
        raise ConfigError(f"{where}: expected {kind}, got {text!r}") from None
    if where.endswith("max_features") and text not in ("sqrt", "all"):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected 'sqrt', 'all' or an integer, got {text!r}") from None
    return text


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    defaults = _sections(RunConfig())
    values = {s: dict(v) for s, v in defaults.items()}
    for section in parser.sections():
        if section not in defaults:
            raise ConfigError(f"{section}: unknown section (expected one of {', '.join(defaults)})")
        for key, raw in parser[section].items():
            if key not in defaults[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            values[section][key] = _parse(raw, defaults[section][key], f"{section}.{key}")
    return _build(values)


def _build(v) -> RunConfig:
    seed = v["run"]["seed"]
    sim_v, pipe = v["simulation"], v["pipeline"]
    try:
        where = "effects"
        effects = FaultEffects(**v["effects"])
        where = "simulation"
        sim = SimConfig(seed=seed, effects=effects, **{k: sim_v[k] for k in _SIM_KEYS})
        if not sim_v["lambda_per_min"] > 0:
            raise ValueError("lambda_per_min must be positive")
        where = "traffic"
        traffic = TrafficProfile(packet_size_resample_s=v["traffic"]["packet_size_resample_s"],
                                 hourly_load=v["traffic"]["hourly_load"])
        where = "pipeline"
        train = TrainConfig(**{k: pipe[k] for k in _TRAIN_KEYS})
        forest = ForestParams(**{a: pipe[k] for k, a in _FOREST_KEYS.items()})
        pipeline = PipelineConfig(train=train, forest=forest, **{k: pipe[k] for k in _PIPE_KEYS},
                                  k_folds=v["evaluation"]["k_folds"], split=v["evaluation"]["split"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return RunConfig(seed, sim, traffic, sim_v["lambda_per_min"], pipeline, v["paths"]["workdir"])


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(p))
