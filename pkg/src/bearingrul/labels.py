"""Regression targets for RUL models.

Two closed-form generators (linear and piecewise with a 3-sigma first
prediction time) and six health-indicator constructions: RMS, feature+PCA,
AE+SOM on raw windows or features, and VQ-VAE codebook distance on raw
windows or features.  HI curves are smoothed, oriented to descend and scaled
to ``[0, 1]``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tensor, TrainConfig, fit
from .features import SmootherConfig, feature_matrix, savitzky_golay
from .ingest import BearingRun
from .models import (
    FEATURE_INPUT_LENGTH,
    RAW_INPUT_LENGTH,
    Codebook,
    ConvAutoencoder,
    VqVae,
    encode_latent,
    nearest_codes,
    perplexity,
)
from .reduce import PcaModel, SomGrid, pca_fit, pca_project_first, som_bmu_distance, som_fit

log = logging.getLogger(__name__)

LABEL_METHODS = ("linear", "piecewise", "rms", "pca", "ae", "f-ae", "vqvae", "f-vqvae")
LEARNED_METHODS = ("pca", "ae", "f-ae", "vqvae", "f-vqvae")

# reference first prediction times for condition-1 bearings, seconds
REFERENCE_FPT_S = {1: 11420, 2: 8220, 3: 9600, 4: 10180, 5: 24070, 6: 16270, 7: 22040}


class DegenerateError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass
class HiCurve:
    values: np.ndarray
    method: str
    postprocessed: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class FptResult:
    index: int | None
    baseline_mean: float
    baseline_std: float
    baseline_length: int
    consecutive: int = 2
    k_sigma: float = 3.0


def linear_labels(n: int) -> HiCurve:
    if n < 2:
        raise ValueError("need at least two records")
    t = np.arange(n, dtype=np.float64)
    return HiCurve(-(t / (n - 1)) + 1.0, "linear", True)


def piecewise_labels(n: int, fpt_index: int) -> HiCurve:
    if n < 2:
        raise ValueError("need at least two records")
    if not 0 <= fpt_index < n - 1:
        raise ValueError(f"fpt index {fpt_index} outside [0, {n - 1})")
    t = np.arange(n, dtype=np.float64)
    tn, tj = float(n - 1), float(fpt_index)
    y = np.where(t <= tj, 1.0, (1.0 / (tj - tn)) * t + tn / (tn - tj))
    return HiCurve(y, "piecewise", True)


def fpt_3sigma(rms_series, baseline_length=None, consecutive=2, k_sigma=3.0) -> FptResult:
    """First index after the baseline where ``consecutive`` values exceed mean + k*std.

    The baseline defaults to the first ``min(500, 20% of n)`` values.
    """
    x = np.asarray(getattr(rms_series, "values", rms_series), dtype=np.float64)
    n = x.size
    b = baseline_length if baseline_length is not None else min(500, int(0.2 * n))
    if b < 2 or n <= b:
        raise ValueError(f"series of length {n} too short for a baseline of {b}")
    mu, sd = float(x[:b].mean()), float(x[:b].std())
    above = x > mu + k_sigma * sd
    if sd == 0 and np.any(above[b:]):
        raise DegenerateError("baseline has zero spread; threshold is meaningless")
    index = None
    run = 0
    for i in range(b, n):
        run = run + 1 if above[i] else 0
        if run >= consecutive:
            index = i - consecutive + 1
            break
    return FptResult(index, mu, sd, b, consecutive, k_sigma)


def rms_hi(run: BearingRun) -> HiCurve:
    if len(run) == 0:
        raise ValueError("empty run")
    return HiCurve([np.sqrt(np.mean(r.horizontal**2)) for r in run.records], "rms")


def distance_hi(latents, reference, method="distance") -> HiCurve:
    """Per-record distance to the best-matching SOM node or to the nearest codes.

    With a codebook, each flattened latent is split into ``D``-wide positions
    and the norm of the full quantization residual is returned.
    """
    Z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    if isinstance(reference, SomGrid):
        return HiCurve([som_bmu_distance(z, reference) for z in Z], method)
    emb = reference.embeddings.data if isinstance(reference, Codebook) else np.asarray(reference)
    d = emb.shape[1]
    if Z.shape[1] % d:
        raise ValueError(f"latent width {Z.shape[1]} is not a multiple of code dim {d}")
    pos = Z.reshape(-1, d)
    resid = pos - emb[nearest_codes(pos, emb)]
    return HiCurve(np.sqrt((resid**2).reshape(len(Z), -1).sum(axis=1)), method)


def orient_and_scale(values) -> np.ndarray:
    """Flip curves that rise with time, then min-max scale to ``[0, 1]``."""
    y = np.asarray(values, dtype=np.float64)
    span = np.ptp(y)
    if span == 0:
        raise DegenerateError("constant health indicator")
    t = np.arange(y.size, dtype=np.float64)
    if np.corrcoef(t, y)[0, 1] > 0:
        y = -y
    return (y - y.min()) / span


def postprocess_hi(raw: HiCurve, smoother: SmootherConfig = SmootherConfig()) -> HiCurve:
    smoothed = savitzky_golay(raw.values, smoother)
    # smoothing a constant leaves rounding noise, so compare against the curve's scale
    if np.ptp(smoothed) <= 1e-12 * max(1.0, float(np.abs(smoothed).max())):
        raise DegenerateError("health indicator is constant after smoothing")
    return HiCurve(orient_and_scale(smoothed), raw.method, True)


# label-model training ------------------------------------------------------


@dataclass
class LabelModels:
    """Everything a learned HI method needs at label time."""

    method: str
    network: ConvAutoencoder | None = None
    som: SomGrid | None = None
    pca: PcaModel | None = None
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    history: list = field(default_factory=list)
    perplexity: float | None = None


def raw_windows(run: BearingRun, length=RAW_INPUT_LENGTH) -> np.ndarray:
    """``(n, 1, length)`` horizontal-channel crops."""
    return np.stack([r.horizontal[:length] for r in run.records])[:, None, :]


def standardize(F, mean, std):
    return (F - mean) / std


def _feature_stats(F):
    mean = F.mean(axis=0)
    std = F.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _feature_cache(runs, cache):
    if cache is None:
        return [feature_matrix(r) for r in runs]
    out = []
    for r in runs:
        key = (r.condition, r.bearing_index, len(r))
        if key not in cache:
            cache[key] = feature_matrix(r)
        out.append(cache[key])
    return out


def _reconstruction_loss(model, xb, _yb):
    return model.loss(Tensor(xb))


def fit_label_models(
    method,
    runs,
    train_cfg: TrainConfig,
    seed: int = 15,
    som_grid: SomGrid | None = None,
    num_codes: int = 32,
    beta: float = 0.25,
    feature_cache: dict | None = None,
) -> LabelModels | None:
    """Train whatever ``method`` needs on every record of ``runs``."""
    if method not in LABEL_METHODS:
        raise ConfigurationError(f"unknown label method {method!r}")
    if method not in LEARNED_METHODS:
        return None
    lm = LabelModels(method)
    if method in ("pca", "f-ae", "f-vqvae"):
        F = np.concatenate(_feature_cache(runs, feature_cache))
        lm.feature_mean, lm.feature_std = _feature_stats(F)
        X = standardize(F, lm.feature_mean, lm.feature_std)
        if method == "pca":
            lm.pca = pca_fit(X)
            return lm
        X = X[:, None, :]
    else:
        X = np.concatenate([raw_windows(r) for r in runs])

    arch = ("vqvae" if "vqvae" in method else "ae") + ("-feat" if method.startswith("f-") else "-raw")
    if arch.startswith("vqvae"):
        net = VqVae(arch, seed=seed, num_codes=num_codes, beta=beta)
    else:
        net = ConvAutoencoder(arch, seed=seed)
    cfg = replace(train_cfg, seed=seed)
    result = fit(net, (X, None), _reconstruction_loss, cfg)
    lm.network, lm.history = result.model, result.history
    if isinstance(net, VqVae):
        z = encode_latent(net, X)
        idx = nearest_codes(z.reshape(-1, net.codebook.dim), net.codebook.embeddings.data)
        lm.perplexity = perplexity(idx, net.codebook.num_codes)
        log.info("%s codebook perplexity %.2f", arch, lm.perplexity)
    else:
        grid = replace(som_grid or SomGrid(), seed=seed, weights=None)
        lm.som = som_fit(encode_latent(net, X), grid)
    return lm


def raw_hi(method, run: BearingRun, models: LabelModels | None, feature_cache=None) -> HiCurve:
    """Unsmoothed health indicator for one of the HI methods."""
    if method == "rms":
        return rms_hi(run)
    if method not in LEARNED_METHODS:
        raise ConfigurationError(f"{method!r} is not a health-indicator method")
    if models is None or models.method != method:
        raise ConfigurationError(f"method {method!r} needs trained label models")
    if method.startswith("f-") or method == "pca":
        F = _feature_cache([run], feature_cache)[0]
        X = standardize(F, models.feature_mean, models.feature_std)
        if method == "pca":
            return HiCurve(pca_project_first(X, models.pca), method)
        X = X[:, None, :]
    else:
        X = raw_windows(run)
    z = encode_latent(models.network, X)
    ref = models.network.codebook if isinstance(models.network, VqVae) else models.som
    return distance_hi(z, ref, method)


def build_labels(
    method,
    run: BearingRun,
    trained_models: LabelModels | None = None,
    smoother: SmootherConfig = SmootherConfig(),
    fpt_index: int | None = None,
    feature_cache=None,
) -> HiCurve:
    if method not in LABEL_METHODS:
        raise ConfigurationError(f"unknown label method {method!r}")
    n = len(run)
    if method == "linear":
        return linear_labels(n)
    if method == "piecewise":
        if fpt_index is None:
            fpt_index = fpt_3sigma(rms_hi(run)).index
            if fpt_index is None:
                log.warning("%s: no FPT detected, piecewise label falls back to linear", run.name)
                fpt_index = 0
        return piecewise_labels(n, min(fpt_index, n - 2))
    return postprocess_hi(raw_hi(method, run, trained_models, feature_cache), smoother)


def save_label_csv(curve: HiCurve, path):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_index", "hi_value"])
        for i, v in enumerate(curve.values):
            w.writerow([i, repr(float(v))])
    return path


def label_csv_name(method, bearing) -> str:
    return f"labels_{method}_{bearing}.csv"


def load_label_csv(path, method="loaded") -> HiCurve:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return HiCurve(np.atleast_2d(data)[:, 1], method, True)
