"""Command-line entry point: simulate, train, evaluate, predict."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evaluation import StratificationError
from .injector import build_schedule, write_schedule_csv
from .pipeline import FittedPipeline, PipelineError, fit_pipeline, run_cross_validation
from .preprocess import WindowSet, frames_to_table
from .rng import derive
from .sim import run_simulation
from .telemetry import FaultLabel, Schema, read_dataset_csv, write_dataset_csv

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("oranfault")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="oranfault", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, dataset=True):
        p.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="root seed, overrides the config")
        p.add_argument("--out", help="output directory (default: the config's workdir)")
        if dataset:
            p.add_argument("--dataset", help="dataset CSV (default: <workdir>/dataset.csv)")

    common(sub.add_parser("simulate", help="generate dataset.csv and schedule.csv"), dataset=False)
    common(sub.add_parser("train", help="fit the pipeline on the whole dataset"))
    common(sub.add_parser("evaluate", help="stratified k-fold cross-validation report"))
    p = sub.add_parser("predict", help="forecast the fault class m seconds after tick t")
    p.add_argument("--bundle", required=True, help="directory written by 'train'")
    p.add_argument("--dataset", required=True)
    p.add_argument("--tick", "-t", type=int, required=True)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _out_dir(args, cfg) -> Path:
    out = Path(args.out if args.out else cfg.workdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dataset_path(args, cfg) -> Path:
    return Path(args.dataset) if args.dataset else Path(cfg.workdir) / "dataset.csv"


def _read_dataset(path: Path, schema: Schema):
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return read_dataset_csv(path, schema)


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    sim = cfg.sim
    schedule = build_schedule(derive(cfg.seed, "schedule"), sim.topology.containers,
                              sim.duration_s, cfg.lambda_per_min)
    frames, labels = run_simulation(sim, cfg.traffic, schedule)
    table = frames_to_table(frames, sim.schema, sim.duration_s, labels)
    write_dataset_csv(table, sim.schema, out / "dataset.csv")
    write_schedule_csv(schedule, out / "schedule.csv")
    sim.schema.save(out / "schema.txt")
    hist = np.bincount(table.labels, minlength=len(FaultLabel))
    print(f"ticks: {table.n_rows}")
    for lab in FaultLabel:
        print(f"{lab.title:<16}{hist[lab]:>8}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, dataset: Path, out: Path) -> int:
    table = _read_dataset(dataset, cfg.sim.schema)
    ws = WindowSet(table.features, table.labels, cfg.pipeline.k, cfg.pipeline.m)
    fitted = fit_pipeline(table.features, table.labels, np.arange(len(ws)), cfg.pipeline,
                          cfg.seed, cfg.sim.schema.feature_order)
    cfg.sim.schema.save(out / "schema.txt")
    manifest = fitted.save(out, {"seed": cfg.seed, "config_sha256": cfg.hash,
                                 "dataset_rows": table.n_rows, "windows": len(ws)})
    print(f"trained on {len(ws)} windows; bundle manifest: {manifest}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, dataset: Path, out: Path) -> int:
    table = _read_dataset(dataset, cfg.sim.schema)
    report = run_cross_validation(table.features, table.labels, cfg.pipeline, cfg.seed,
                                  cfg.sim.schema.feature_order)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    text = report.to_text()
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_predict(bundle: Path, dataset: Path, tick: int) -> int:
    fitted = FittedPipeline.load(bundle)
    schema = Schema.load(bundle / "schema.txt")
    if tuple(schema.feature_order) != tuple(fitted.normalizer.feature_ids):
        raise PipelineError("predict", "bundle schema does not match its normalizer columns")
    table = _read_dataset(dataset, schema)
    label, proba = fitted.predict_at(table.features, tick)
    print(f"window ending at tick {tick} -> prediction for tick {tick + fitted.config.m}")
    print(f"label: {label.title} (code {int(label)})")
    for lab, p in zip(FaultLabel, proba):
        print(f"  p[{lab.title}] = {p:.6f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "predict":
            return cmd_predict(Path(args.bundle), Path(args.dataset), args.tick)
        cfg = _config(args)
        out = _out_dir(args, cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        dataset = _dataset_path(args, cfg)
        if args.command == "train":
            return cmd_train(cfg, dataset, out)
        return cmd_evaluate(cfg, dataset, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StratificationError as exc:
        print(f"stratification failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (PipelineError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
