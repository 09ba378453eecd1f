"""Experiment orchestration: folds, per-seed training, evaluation and artifacts.

Label models are fit on every condition-1 bearing once per seed.  The
predictor is then trained leave-one-bearing-out on the labels of six bearings
and evaluated on the seventh.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .autodiff import TrainConfig, TrainingDiverged, file_digest, fit, load_checkpoint, predict
from .features import SmootherConfig
from .ingest import BearingRun, NormStats, discover_bearings, fit_norm_stats, load_bearing, normalize
from .labels import (
    LABEL_METHODS,
    LEARNED_METHODS,
    ConfigurationError,
    DegenerateError,
    HiCurve,
    build_labels,
    fit_label_models,
    fpt_3sigma,
    label_csv_name,
    orient_and_scale,
    raw_hi,
    rms_hi,
    save_label_csv,
)
from .metrics import DEFAULT_MV_WINDOW, MetricReport, evaluate, mean_report
from .metrics import DegenerateError as DegenerateMetricError
from .models import Astcn, load_model, save_model
from .reports import emit_reports, summary_rows
from .synthetic import synthetic_corpus

log = logging.getLogger(__name__)

N_FOLD_BEARINGS = 7
GENERALIZATION_BEARINGS = (1, 2, 3, 4)


def _default_label_training():
    return TrainConfig(learning_rate=1e-3, batch_size=256, max_epochs=150, patience=20)


def _default_predictor_training():
    return TrainConfig(learning_rate=1e-3, batch_size=128, max_epochs=100, patience=15)


@dataclass
class ExperimentConfig:
    """Everything that determines an experiment's output.

    ``dataset_root = None`` together with a ``synthetic`` mapping (keyword
    arguments of :func:`synthetic_corpus`) runs on a generated corpus.
    """

    dataset_root: str | None = None
    label_method: str = "vqvae"
    predictor: str = "astcn"
    label_training: TrainConfig = field(default_factory=_default_label_training)
    predictor_training: TrainConfig = field(default_factory=_default_predictor_training)
    seeds: tuple = (15, 16, 25)
    mv_window: int = DEFAULT_MV_WINDOW
    smoothing: SmootherConfig = field(default_factory=SmootherConfig)
    output_dir: str | None = "results"
    synthetic: dict | None = None
    max_records: int | None = None
    num_codes: int = 32
    beta: float = 0.25

    def __post_init__(self):
        if isinstance(self.label_training, dict):
            self.label_training = TrainConfig(**self.label_training)
        if isinstance(self.predictor_training, dict):
            self.predictor_training = TrainConfig(**self.predictor_training)
        if isinstance(self.smoothing, dict):
            self.smoothing = SmootherConfig(**self.smoothing)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.label_method not in LABEL_METHODS:
            raise ConfigurationError(f"unknown label method {self.label_method!r}")
        if self.predictor != "astcn":
            raise ConfigurationError(f"unknown predictor {self.predictor!r}")
        if self.dataset_root is None and self.synthetic is None:
            raise ConfigurationError("set dataset_root or a synthetic corpus")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class Fold:
    test: BearingRun
    train: list


@dataclass
class FoldResult:
    """Outcome for one held-out bearing across all seeds."""

    bearing: str
    method: str
    per_seed: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    predictions: dict = field(default_factory=dict)
    raw_hi: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    @property
    def seeds(self):
        return sorted(self.per_seed)

    @property
    def mean_report(self) -> MetricReport | None:
        if not self.per_seed:
            return None
        return mean_report(self.per_seed[s] for s in self.seeds)

    def _mean_curve(self, curves):
        return np.mean([curves[s] for s in self.seeds], axis=0) if self.per_seed else None

    @property
    def label_curve(self):
        return self._mean_curve(self.labels)

    @property
    def prediction_curve(self):
        return self._mean_curve(self.predictions)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    folds: list
    summary_rows: list
    checkpoint_digests: dict = field(default_factory=dict)


# data ----------------------------------------------------------------------


def truncate(run: BearingRun, n: int | None) -> BearingRun:
    if n is None or len(run) <= n:
        return run
    return BearingRun(run.condition, run.bearing_index, run.records[:n], run.record_period)


def load_condition(cfg: ExperimentConfig, condition: int, indices=None) -> list:
    """Runs of one operating condition from disk or from the synthetic generator."""
    if cfg.dataset_root is None:
        opts = dict(cfg.synthetic)
        if indices is not None:
            opts["n_bearings"] = max(indices)
        runs = synthetic_corpus(condition=condition, **opts)
    else:
        found = discover_bearings(cfg.dataset_root)
        keys = sorted(k for k in found if k[0] == condition)
        if indices is not None:
            missing = [i for i in indices if (condition, i) not in found]
            if missing:
                raise ConfigurationError(f"condition {condition} bearings {missing} not under {cfg.dataset_root}")
            keys = [(condition, i) for i in indices]
        runs = [load_bearing(found[k], *k) for k in keys]
    if indices is not None:
        runs = [r for r in runs if r.bearing_index in indices]
    return [truncate(r, cfg.max_records) for r in runs]


def make_folds(runs) -> list:
    runs = list(runs)
    if len(runs) != N_FOLD_BEARINGS:
        raise ConfigurationError(f"need exactly {N_FOLD_BEARINGS} runs, got {len(runs)}")
    return [Fold(r, [o for o in runs if o is not r]) for r in runs]


def fold_seed(seed: int, run: BearingRun) -> int:
    """Seed for one (seed, bearing) cell, independent of execution order."""
    ss = np.random.SeedSequence([seed, run.condition, run.bearing_index])
    return int(ss.generate_state(1)[0])


def _stats_arrays(stats: NormStats):
    return np.asarray(stats.mean)[None, :, None], np.asarray(stats.std)[None, :, None]


def predictor_inputs(runs, stats: NormStats) -> np.ndarray:
    mean, std = _stats_arrays(stats)
    return np.concatenate([(r.signals() - mean) / std for r in runs])


def fitted_smoother(smoother: SmootherConfig, n: int) -> SmootherConfig:
    """Shrink the smoothing window for runs shorter than it."""
    if n >= smoother.window:
        return smoother
    w = n if n % 2 else n - 1
    if w <= smoother.polynomial_order:
        raise ConfigurationError(f"run of {n} records is too short to smooth")
    log.warning("smoothing window %d exceeds run length %d; using %d", smoother.window, n, w)
    return replace(smoother, window=w)


def _mv_window(cfg, n):
    if n >= cfg.mv_window:
        return cfg.mv_window
    log.warning("mv window %d exceeds series length %d; using %d", cfg.mv_window, n, n)
    return n


# labels --------------------------------------------------------------------


@dataclass
class SeedLabels:
    labels: dict
    raw: dict
    models: object = None
    stats: NormStats | None = None


def seed_labels(cfg: ExperimentConfig, runs, seed: int, feature_cache=None) -> SeedLabels:
    """Fit the label model on ``runs`` (if learned) and build a label curve for each."""
    method = cfg.label_method
    stats = fit_norm_stats(runs)
    nruns = [normalize(r, stats) for r in runs]
    models = None
    if method in LEARNED_METHODS:
        models = fit_label_models(
            method,
            nruns,
            cfg.label_training,
            seed=seed,
            num_codes=cfg.num_codes,
            beta=cfg.beta,
            feature_cache=feature_cache,
        )
    out = SeedLabels({}, {}, models, stats)
    for run, nrun in zip(runs, nruns):
        out.labels[run.name], out.raw[run.name] = label_run(cfg, run, nrun, models, feature_cache)
    return out


def label_run(cfg, run, nrun, models, feature_cache=None):
    """``(label curve, oriented+scaled unsmoothed HI or None)`` for one run."""
    method = cfg.label_method
    smoother = fitted_smoother(cfg.smoothing, len(run))
    if method == "piecewise":
        fpt = fpt_3sigma(rms_hi(run)).index
        return build_labels(method, run, fpt_index=fpt).values, None
    if method == "linear":
        return build_labels(method, run).values, None
    curve = build_labels(method, nrun, models, smoother, feature_cache=feature_cache)
    raw = raw_hi(method, nrun, models, feature_cache)
    return curve.values, orient_and_scale(raw.values)


# predictor -----------------------------------------------------------------


def membership_digest(members) -> str:
    return hashlib.sha256(json.dumps(sorted(members)).encode()).hexdigest()


def train_predictor(cfg: ExperimentConfig, train_runs, labels: dict, seed: int):
    """Fit an ASTCN on ``train_runs``; returns ``(model, norm stats, provenance)``."""
    stats = fit_norm_stats(train_runs)
    X = predictor_inputs(train_runs, stats)
    Y = np.concatenate([labels[r.name] for r in train_runs])
    rows = [(r.name, i) for r in train_runs for i in range(len(r))]
    tcfg = replace(cfg.predictor_training, seed=seed)
    model = Astcn(seed=seed, input_length=X.shape[2])
    result = fit(model, (X, Y), lambda m, xb, yb: m.loss(xb, yb), tcfg)
    used = [rows[i] for i in result.train_indices]
    provenance = {
        "bearings": sorted({r.name for r in train_runs}),
        "digest": membership_digest(used),
        "best_epoch": result.best_epoch,
        "stopped_epoch": result.stopped_epoch,
    }
    return model, stats, provenance, used


def audit_provenance(fold: FoldResult, members: list) -> bool:
    """True when no training row came from the fold's own bearing and the digest matches."""
    return all(m[0] != fold.bearing for m in members) and all(
        p["digest"] == membership_digest(members) for p in fold.provenance.values()
    )


def checkpoint_path(out_dir, method, bearing, seed) -> Path:
    return Path(out_dir) / "checkpoints" / f"astcn_{method}_{bearing}_s{seed}.npz"


def _save_predictor(path, model, stats, provenance, seed):
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path, seed=seed, norm_mean=list(stats.mean), norm_std=list(stats.std), provenance=provenance)


def _load_predictor(path):
    meta, _ = load_checkpoint(path)
    return load_model(path), NormStats(tuple(meta["norm_mean"]), tuple(meta["norm_std"]))


# experiment ----------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, folds=None, runs=None) -> ExperimentResult:
    """Leave-one-bearing-out evaluation for every seed.

    ``folds`` optionally restricts which held-out bearings are run (by name or
    1-based index).  ``runs`` may be supplied to skip loading.
    """
    runs = runs if runs is not None else load_condition(cfg, 1)
    all_folds = make_folds(runs)
    if folds is not None:
        wanted = {str(f) for f in folds}
        all_folds = [f for f in all_folds if f.test.name in wanted or str(f.test.bearing_index) in wanted]
    results = {f.test.name: FoldResult(f.test.name, cfg.label_method) for f in all_folds}
    feature_cache: dict = {}
    out = Path(cfg.output_dir) if cfg.output_dir else None

    for seed in cfg.seeds:
        try:
            sl = seed_labels(cfg, runs, seed, feature_cache)
        except (TrainingDiverged, DegenerateError) as exc:
            log.error("seed %d: label construction failed: %s", seed, exc)
            for r in results.values():
                r.failures[seed] = f"labels: {exc}"
            continue
        if out is not None:
            ldir = out / "labels" / f"seed_{seed}"
            ldir.mkdir(parents=True, exist_ok=True)
            for name, values in sl.labels.items():
                save_label_csv(HiCurve(values, cfg.label_method), ldir / label_csv_name(cfg.label_method, name))

        for fold in all_folds:
            name = fold.test.name
            res = results[name]
            fseed = fold_seed(seed, fold.test)
            try:
                model, stats, prov, members = train_predictor(cfg, fold.train, sl.labels, fseed)
            except TrainingDiverged as exc:
                log.error("%s seed %d: predictor diverged: %s", name, seed, exc)
                res.failures[seed] = f"predictor: {exc}"
                continue
            if any(m[0] == name for m in members):
                raise AssertionError(f"test bearing {name} leaked into its own training set")
            pred = predict(model, predictor_inputs([fold.test], stats))
            label = sl.labels[name]
            try:
                res.per_seed[seed] = evaluate(pred, label, _mv_window(cfg, len(label)))
            except DegenerateMetricError as exc:
                log.error("%s seed %d: %s (prediction is constant at %.4g)", name, seed, exc, pred[0])
                res.failures[seed] = f"metrics: {exc}"
                continue
            res.labels[seed] = label
            res.predictions[seed] = pred
            res.raw_hi[seed] = sl.raw[name]
            res.provenance[seed] = prov
            if out is not None:
                _save_predictor(checkpoint_path(out, cfg.label_method, name, seed), model, stats, prov, fseed)
            log.info("%s seed %d: rmse %.4f", name, seed, res.per_seed[seed].rmse)

    fold_results = [results[f.test.name] for f in all_folds]
    for r in fold_results:
        if r.failures:
            log.warning("%s: %d failed seed(s); averaging over %s", r.bearing, len(r.failures), r.seeds)
    if out is not None:
        emit_reports(fold_results, out, cfg)
    return ExperimentResult(cfg, fold_results, summary_rows(fold_results))


def run_generalization(cfg: ExperimentConfig, runs=None, target_runs=None) -> ExperimentResult:
    """Evaluate predictors trained on bearings 1-1..1-6 on condition-2 bearings without updates.

    Checkpoints are reused from ``output_dir`` when present, otherwise trained
    and saved first.  Their digests are compared before and after inference.
    """
    runs = runs if runs is not None else load_condition(cfg, 1)
    if target_runs is None:
        try:
            target_runs = load_condition(cfg, 2, GENERALIZATION_BEARINGS)
        except (ConfigurationError, FileNotFoundError) as exc:
            raise ConfigurationError(f"condition-2 data unavailable: {exc}") from None
    if not target_runs:
        raise ConfigurationError("no condition-2 bearings to test")
    # the last fold's predictor is exactly the one trained on bearings 1-1..1-6
    held_out = next(r for r in runs if r.bearing_index == N_FOLD_BEARINGS)
    train_runs = [r for r in runs if r is not held_out]
    out = Path(cfg.output_dir or "results")
    results = {r.name: FoldResult(r.name, cfg.label_method) for r in target_runs}
    digests = {}

    for seed in cfg.seeds:
        try:
            sl = seed_labels(cfg, runs, seed)
        except (TrainingDiverged, DegenerateError) as exc:
            for r in results.values():
                r.failures[seed] = f"labels: {exc}"
            continue
        path = checkpoint_path(out, cfg.label_method, held_out.name, seed)
        if not path.exists():
            fseed = fold_seed(seed, held_out)
            model, stats, prov, _ = train_predictor(cfg, train_runs, sl.labels, fseed)
            _save_predictor(path, model, stats, prov, fseed)
        before = file_digest(path)
        model, stats = _load_predictor(path)
        # condition-2 labels come from the condition-1 label models, applied without refitting
        for run in target_runs:
            nrun = normalize(run, sl.stats)
            label, raw = label_run(cfg, run, nrun, sl.models)
            pred = predict(model, predictor_inputs([run], stats))
            res = results[run.name]
            try:
                res.per_seed[seed] = evaluate(pred, label, _mv_window(cfg, len(label)))
            except DegenerateMetricError as exc:
                res.failures[seed] = f"metrics: {exc}"
                continue
            res.labels[seed], res.predictions[seed], res.raw_hi[seed] = label, pred, raw
        after = file_digest(path)
        if before != after:
            raise AssertionError(f"checkpoint {path} changed during inference")
        digests[seed] = before

    fold_results = [results[r.name] for r in target_runs]
    if cfg.output_dir:
        emit_reports(fold_results, out / "generalization", cfg, extra={"checkpoint_sha256": digests})
    return ExperimentResult(cfg, fold_results, summary_rows(fold_results), digests)
