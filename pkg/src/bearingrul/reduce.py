"""PCA over feature matrices and an online self-organizing map over latents."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import load_checkpoint, save_checkpoint


class DegenerateError(ValueError):
    pass


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows, orthonormal, strongest first
    variances: np.ndarray


def pca_fit(X) -> PcaModel:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca_fit needs an (N >= 2, D) matrix")
    mean = X.mean(axis=0)
    centred = X - mean
    cov = centred.T @ centred / X.shape[0]
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    if vals[0] <= 0:
        raise DegenerateError("data has zero variance")
    lead = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(len(vecs)), lead])
    signs[signs == 0] = 1.0
    return PcaModel(mean, vecs * signs[:, None], vals)


def pca_project(X, model: PcaModel, k=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.mean.size:
        raise ValueError(f"expected {model.mean.size} columns, got {X.shape[1]}")
    comps = model.components if k is None else model.components[:k]
    return (X - model.mean) @ comps.T


def pca_project_first(X, model: PcaModel) -> np.ndarray:
    return pca_project(X, model, 1)[:, 0]


def pca_reconstruct(scores, model: PcaModel) -> np.ndarray:
    k = scores.shape[1]
    return scores @ model.components[:k] + model.mean


@dataclass
class SomGrid:
    width: int = 8
    height: int = 8
    weights: np.ndarray | None = None
    lr_initial: float = 0.5
    lr_final: float = 0.01
    radius_initial: float | None = None
    radius_final: float = 0.5
    epochs: int = 100
    seed: int = 0
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.radius_initial is None:
            self.radius_initial = max(0.5 * np.hypot(self.width - 1, self.height - 1), self.radius_final)

    @property
    def coords(self) -> np.ndarray:
        gy, gx = np.mgrid[0 : self.height, 0 : self.width]
        return np.stack([gx.ravel(), gy.ravel()], axis=1).astype(float)


def som_init(latents, grid: SomGrid) -> np.ndarray:
    """Nodes start at randomly chosen data rows (with replacement), seeded by ``grid.seed``."""
    rng = np.random.default_rng(grid.seed)
    idx = rng.integers(0, len(latents), size=grid.width * grid.height)
    return np.array(latents[idx], dtype=np.float64)


def som_fit(latents, grid: SomGrid | None = None) -> SomGrid:
    """Classic online SOM with Gaussian neighbourhood and exponential decay schedules."""
    X = np.asarray(latents, dtype=np.float64)
    if X.ndim != 2 or len(X) < 1:
        raise ValueError("som_fit needs an (N >= 1, D) matrix")
    grid = grid or SomGrid()
    if grid.weights is None:
        grid.weights = som_init(X, grid)
    w = grid.weights.copy()
    coords = grid.coords
    rng = np.random.default_rng([grid.seed, 1])
    total = max(grid.epochs * len(X), 1)
    lr_ratio = grid.lr_final / grid.lr_initial
    r_ratio = grid.radius_final / grid.radius_initial
    step = 0
    for _ in range(grid.epochs):
        for i in rng.permutation(len(X)):
            frac = step / total
            lr = grid.lr_initial * lr_ratio**frac
            radius = grid.radius_initial * r_ratio**frac
            x = X[i]
            bmu = np.argmin(((w - x) ** 2).sum(axis=1))
            d2 = ((coords - coords[bmu]) ** 2).sum(axis=1)
            h = np.exp(-d2 / (2.0 * radius**2))
            w += (lr * h)[:, None] * (x - w)
            step += 1
    grid.weights = w
    return grid


def som_bmu(x, grid: SomGrid) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != grid.weights.shape[1]:
        raise ValueError(f"vector dim {x.shape[-1]} != node dim {grid.weights.shape[1]}")
    return int(np.argmin(((grid.weights - x) ** 2).sum(axis=1)))


def som_bmu_distance(x, grid: SomGrid) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x - grid.weights[som_bmu(x, grid)]))


def save_pca(model: PcaModel, path):
    return save_checkpoint(
        path, "pca", {"mean": model.mean, "components": model.components, "variances": model.variances}
    )


def save_som(grid: SomGrid, path):
    cfg = {
        k: getattr(grid, k)
        for k in ("width", "height", "lr_initial", "lr_final", "radius_initial", "radius_final", "epochs")
    }
    return save_checkpoint(path, "som", {"weights": grid.weights}, config=cfg, seed=grid.seed)


def load_reducer(path):
    meta, arrays = load_checkpoint(path)
    if meta["arch"] == "pca":
        return PcaModel(arrays["mean"], arrays["components"], arrays["variances"])
    if meta["arch"] == "som":
        return SomGrid(weights=arrays["weights"], seed=meta["seed"], **meta["config"])
    raise ValueError(f"{path} is not a PCA or SOM checkpoint")
