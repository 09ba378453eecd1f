"""Mini-batch training with early stopping on a held-out validation split."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .optim import AdamW, TrainConfig
from .tensor import Tensor

log = logging.getLogger(__name__)


class NoDataError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class FitResult:
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    train_indices: np.ndarray | None = None


class EarlyStopping:
    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, value: float) -> tuple[bool, bool]:
        """Return ``(improved, should_stop)``."""
        if value < self.best:
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation; its last ``fraction`` becomes the validation set."""
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(fraction * n))
    n_val = min(max(n_val, 1), n - 1) if n > 1 else 0
    return np.sort(perm[: n - n_val]), np.sort(perm[n - n_val :])


def _batches(idx, size):
    for start in range(0, len(idx), size):
        yield idx[start : start + size]


def _take(arr, idx):
    return None if arr is None else arr[idx]


def evaluate_loss(model, loss_fn, X, Y, batch_size):
    was_training = model.training
    model.eval()
    total, count = 0.0, 0
    idx = np.arange(len(X))
    for b in _batches(idx, batch_size):
        total += loss_fn(model, X[b], _take(Y, b)).item() * len(b)
        count += len(b)
    model.train(was_training)
    return total / count


def fit(model, dataset, loss_fn, cfg: TrainConfig, val_data=None) -> FitResult:
    """Train ``model`` with AdamW until early stopping triggers.

    ``dataset`` is ``(X, Y)`` with ``Y`` possibly ``None`` for reconstruction
    tasks; ``loss_fn(model, xb, yb)`` must return a scalar :class:`Tensor`.
    Unless ``val_data`` is given the validation split is carved from the
    dataset with ``cfg.seed``.  The returned model carries the weights of the
    best validation epoch.
    """
    X, Y = dataset
    if X is None or len(X) == 0:
        raise NoDataError("empty training set")
    if val_data is None:
        train_idx, val_idx = split_indices(len(X), cfg.validation_fraction, cfg.seed)
        if len(val_idx) == 0:
            val_idx = train_idx
        Xv, Yv = X[val_idx], _take(Y, val_idx)
    else:
        train_idx = np.arange(len(X))
        Xv, Yv = val_data

    rng = np.random.default_rng(cfg.seed)
    model.reseed(cfg.seed)
    model.train()
    opt = AdamW(model.parameters(), cfg)
    stopper = EarlyStopping(cfg.patience)
    best_state = model.state_dict()
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(train_idx)
        running, seen = 0.0, 0
        for b in _batches(order, cfg.batch_size):
            opt.zero_grad()
            loss = loss_fn(model, X[b], _take(Y, b))
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}")
            loss.backward()
            opt.step()
            running += value * len(b)
            seen += len(b)
        val = evaluate_loss(model, loss_fn, Xv, Yv, cfg.batch_size)
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": running / seen, "val_loss": val})
        improved, stop = stopper.update(epoch, val)
        if improved:
            best_state = model.state_dict()
        log.debug("epoch %d train %.6g val %.6g", epoch, running / seen, val)
        if stop:
            break
    model.load_state_dict(best_state)
    model.eval()
    return FitResult(model, history, stopper.best_epoch, epoch, train_idx)


def predict(model, X, batch_size=256, fn=None):
    """Evaluation-mode forward pass over ``X`` in batches, concatenated along axis 0."""
    model.eval()
    fn = fn or model
    outs = [fn(Tensor(X[s : s + batch_size])).data for s in range(0, len(X), batch_size)]
    return np.concatenate(outs, axis=0)
