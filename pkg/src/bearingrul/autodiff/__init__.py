"""Minimal reverse-mode autodiff engine, layers, AdamW and a training loop."""

from .checkpoint import file_digest, load_checkpoint, save_checkpoint
from .layers import (
    Abs,
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    GlobalAvgPool,
    LeakyReLU,
    MaxPool1d,
    Module,
    Parameter,
    ReLU,
    Sequential,
    Sigmoid,
    Upsample1d,
)
from .ops import (
    Conv1dSpec,
    batch_norm,
    conv1d,
    dense,
    dropout,
    global_avg_pool,
    max_pool1d,
    upsample1d,
)
from .optim import AdamW, OptimState, TrainConfig, adamw_step
from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    leaky_relu,
    matmul,
    mse,
    mul,
    relu,
    reshape,
    sigmoid,
    soft_threshold,
    square,
    stop_gradient,
    tabs,
    take_rows,
    tmean,
    transpose,
    tsum,
)
from .train import EarlyStopping, FitResult, NoDataError, TrainingDiverged, fit, predict

