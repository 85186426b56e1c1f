"""Normalise -> PCA -> LSTM forecast -> inverse PCA -> classify.

One implementation serves cross-validation, full training and single-tick
prediction, so every path produces identical numbers for the same window.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import lstm
from .adaboost import AdaBoostModel, fit_adaboost
from .evaluation import (
    EvaluationReport,
    FoldResult,
    StratificationError,
    blocked_kfold,
    confusion,
    forecast_rmse,
    metrics_from_confusion,
    stratified_kfold,
)
from .forest import ForestModel, ForestParams, fit_forest
from .pca import PcaModel, fit_pca
from .preprocess import Normalizer, WindowSet, fit_normalizer
from .rng import child_seed
from .telemetry import FaultLabel

log = logging.getLogger(__name__)

PREDICT_CHUNK = 2048


@dataclass(frozen=True)
class PipelineConfig:
    k: int = 60
    m: int = 5
    pca_r: int = 10
    hidden_size: int = 32
    n_layers: int = 2
    train: lstm.TrainConfig = field(default_factory=lstm.TrainConfig)
    forest: ForestParams = field(default_factory=ForestParams)
    adaboost_rounds: int = 50
    run_baseline: bool = True
    k_folds: int = 5
    split: str = "stratified"

    def __post_init__(self):
        if self.k < 0 or self.m < 1:
            raise ValueError("need k >= 0 and m >= 1")
        if self.pca_r < 1 or self.hidden_size < 1 or self.n_layers < 1:
            raise ValueError("pca_r, hidden_size and n_layers must be >= 1")
        if self.split not in ("stratified", "blocked"):
            raise ValueError(f"split must be 'stratified' or 'blocked', got {self.split!r}")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class FittedPipeline:
    config: PipelineConfig
    normalizer: Normalizer
    pca: PcaModel
    lstm_params: lstm.LstmParams
    forest: ForestModel
    adaboost: AdaBoostModel | None = None
    loss_history: list[float] = field(default_factory=list)

    def reduce(self, features):
        """Raw feature rows -> (normalised rows, PCA scores)."""
        xn = self.normalizer.apply(features)
        return xn, self.pca.transform(xn)

    def forecast(self, features, window_idx, labels=None):
        """Reconstructed, normalised forecasts of the target row of each window.

        Returns ``(reconstructed, normalised_table)``.
        """
        xn, z = self.reduce(features)
        ws = WindowSet(z, np.zeros(len(z), np.int64) if labels is None else labels,
                       self.config.k, self.config.m)
        idx = np.asarray(window_idx, dtype=np.int64)
        out = np.empty((idx.size, self.pca.n_components))
        for lo in range(0, idx.size, PREDICT_CHUNK):
            sel = idx[lo : lo + PREDICT_CHUNK]
            out[lo : lo + sel.size] = lstm.predict_batch(self.lstm_params, ws.inputs(sel))
        return self.pca.inverse_transform(out), xn

    def classify(self, reconstructed, which: str = "forest"):
        model = self.forest if which == "forest" else self.adaboost
        if model is None:
            raise PipelineError("classify", f"no {which} model in this pipeline")
        return model.predict(reconstructed), model.predict_proba(reconstructed)

    def predict_windows(self, features, window_idx):
        recon, _ = self.forecast(features, window_idx)
        return self.classify(recon)

    def predict_at(self, features, t: int):
        """Class and probabilities for tick ``t + m`` from the window ending at tick ``t``."""
        n = len(features)
        lo, hi = self.config.k, n - 1 - self.config.m
        if not lo <= t <= hi:
            raise ValueError(f"tick {t} out of range: valid ticks are {lo}..{hi} "
                             f"(minimum {lo} = k, maximum rows-1-m)")
        labels, proba = self.predict_windows(features, [t - self.config.k])
        return FaultLabel(int(labels[0])), proba[0]

    # -- persistence -----------------------------------------------------------------
    ARTIFACTS = ("normalizer.csv", "pca.csv", "lstm.txt", "forest.txt")

    def save(self, out_dir, extra_manifest: dict | None = None) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.normalizer.save(out / "normalizer.csv")
        self.pca.save(out / "pca.csv")
        self.lstm_params.save(out / "lstm.txt")
        self.forest.save(out / "forest.txt")
        c = self.config
        entries = {
            "k": c.k, "m": c.m, "r": c.pca_r, "h": c.hidden_size, "n_layers": c.n_layers,
            "n_trees": c.forest.n_trees, "max_depth": c.forest.max_depth,
        }
        entries.update(extra_manifest or {})
        for name in self.ARTIFACTS:
            entries[f"sha256.{name}"] = hashlib.sha256((out / name).read_bytes()).hexdigest()
        text = "".join(f"{key}={val}\n" for key, val in entries.items())
        (out / "manifest.txt").write_text(text, encoding="utf-8")
        return out / "manifest.txt"

    @classmethod
    def load(cls, bundle_dir) -> "FittedPipeline":
        d = Path(bundle_dir)
        manifest = read_manifest(d / "manifest.txt")
        for name in cls.ARTIFACTS:
            digest = hashlib.sha256((d / name).read_bytes()).hexdigest()
            if manifest.get(f"sha256.{name}") != digest:
                raise PipelineError("load", f"{d / name} does not match the manifest checksum")
        params = lstm.LstmParams.load(d / "lstm.txt")
        forest = ForestModel.load(d / "forest.txt")
        config = PipelineConfig(
            k=int(manifest["k"]), m=int(manifest["m"]), pca_r=int(manifest["r"]),
            hidden_size=int(manifest["h"]), n_layers=int(manifest["n_layers"]),
            forest=forest.params,
        )
        return cls(config, Normalizer.load(d / "normalizer.csv"), PcaModel.load(d / "pca.csv"),
                   params, forest)


def read_manifest(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            key, _, val = line.partition("=")
            out[key] = val
    return out


def fit_pipeline(features, labels, window_idx, config: PipelineConfig, seed: int,
                 feature_ids=None) -> FittedPipeline:
    """Fit every stage on the windows ``window_idx`` only.

    The normaliser and PCA see the target rows of those windows; the LSTM maps
    their reduced input windows to reduced targets; the classifiers are trained
    on the LSTM's own reconstructed forecasts so that they see at training time
    the same kind of input they receive at prediction time.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    idx = np.asarray(window_idx, dtype=np.int64)
    ws = WindowSet(features, labels, config.k, config.m)
    rows = ws.target_rows[idx]
    stage = "normalize"
    try:
        norm = fit_normalizer(features, rows, feature_ids)
        stage = "pca"
        xn = norm.apply(features)
        pca = fit_pca(xn[rows], config.pca_r)
        stage = "lstm"
        z = pca.transform(xn)
        zws = WindowSet(z, labels, config.k, config.m)
        train_cfg = _with_seed(config.train, child_seed(seed, "lstm"))
        t0 = time.perf_counter()
        params, history = lstm.train(zws.inputs(idx), z[rows], train_cfg,
                                     hidden_size=config.hidden_size, n_layers=config.n_layers)
        log.info("lstm: %d windows, %d epochs, loss %.5g -> %.5g (%.1fs)", idx.size,
                 len(history), history[0], history[-1], time.perf_counter() - t0)
        fitted = FittedPipeline(config, norm, pca, params, None, None, history)  # type: ignore[arg-type]
        recon, _ = fitted.forecast(features, idx)
        y = ws.target_labels[idx]
        stage = "forest"
        t0 = time.perf_counter()
        fitted.forest = fit_forest(recon, y, config.forest, seed=child_seed(seed, "forest"))
        log.info("forest: %d trees (%.1fs)", config.forest.n_trees, time.perf_counter() - t0)
        if config.run_baseline:
            stage = "adaboost"
            t0 = time.perf_counter()
            fitted.adaboost = fit_adaboost(recon, y, config.adaboost_rounds)
            log.info("adaboost: %d rounds (%.1fs)", len(fitted.adaboost.stumps), time.perf_counter() - t0)
    except PipelineError:
        raise
    except (ValueError, RuntimeError) as exc:
        raise PipelineError(stage, str(exc)) from exc
    return fitted


def _with_seed(cfg: lstm.TrainConfig, seed: int) -> lstm.TrainConfig:
    return replace(cfg, seed=seed)


def make_folds(window_labels, config: PipelineConfig, seed: int):
    if config.split == "blocked":
        return blocked_kfold(len(window_labels), config.k_folds)
    return stratified_kfold(window_labels, config.k_folds, child_seed(seed, "folds"))


def run_cross_validation(features, labels, config: PipelineConfig, seed: int,
                         feature_ids=None) -> EvaluationReport:
    features = np.asarray(features, dtype=np.float64)
    ws = WindowSet(features, labels, config.k, config.m)
    y_all = ws.target_labels
    folds = make_folds(y_all, config, seed)
    results = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(ws)), test_idx)
        log.info("fold %d/%d: %d train, %d test windows", f + 1, len(folds), train_idx.size, test_idx.size)
        try:
            fitted = fit_pipeline(features, labels, train_idx, config, child_seed(seed, "fold", f),
                                  feature_ids)
        except PipelineError as exc:
            raise PipelineError(f"fold {f}/{exc.stage}", str(exc.__cause__ or exc)) from exc
        recon, xn = fitted.forecast(features, test_idx)
        y_true = y_all[test_idx]
        pred, _ = fitted.classify(recon)
        cm = confusion(y_true, pred)
        rmse = forecast_rmse(recon, xn[ws.target_rows[test_idx]])
        result = FoldResult(f, train_idx.size, test_idx.size, cm, metrics_from_confusion(cm), rmse,
                            lstm_loss_history=list(fitted.loss_history),
                            explained_variance_ratio=float(fitted.pca.explained_variance_ratio.sum()))
        if fitted.adaboost is not None:
            base_pred, _ = fitted.classify(recon, "adaboost")
            result.baseline_confusion = confusion(y_true, base_pred)
            result.baseline_metrics = metrics_from_confusion(result.baseline_confusion)
        log.info("fold %d: accuracy %.4f, rmse %.5f", f, result.metrics.accuracy, rmse)
        results.append(result)
    return EvaluationReport(results, n_windows=len(ws), n_rows=len(features))


__all__ = [
    "PipelineConfig", "PipelineError", "FittedPipeline", "fit_pipeline", "run_cross_validation",
    "make_folds", "read_manifest", "StratificationError",
]
