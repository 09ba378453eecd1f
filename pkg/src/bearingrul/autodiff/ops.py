"""Differentiable array operations for batched 1-D signals shaped ``(N, C, L)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _make, as_tensor


@dataclass(frozen=True)
class Conv1dSpec:
    kernel_length: int
    in_channels: int
    out_channels: int
    stride: int = 1
    dilation: int = 1
    causal: bool = False
    padding: int | tuple[int, int] = 0

    def __post_init__(self):
        for name in ("kernel_length", "in_channels", "out_channels", "stride", "dilation"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.causal and self.stride != 1:
            raise ValueError("causal convolution requires stride 1")

    @property
    def pads(self) -> tuple[int, int]:
        if self.causal:
            return ((self.kernel_length - 1) * self.dilation, 0)
        if isinstance(self.padding, tuple):
            return self.padding
        return (self.padding, self.padding)

    def output_length(self, length: int) -> int:
        left, right = self.pads
        span = self.dilation * (self.kernel_length - 1)
        n = (length + left + right - span - 1) // self.stride + 1
        if n < 1:
            raise ShapeError(f"input length {length} too short for {self}")
        return n


def conv1d(x: Tensor, spec: Conv1dSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``out[n, o, t] = b[o] + sum_{c,i} w[o, c, i] * xpad[n, c, t*stride + dilation*i]``."""
    if x.ndim != 3 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"conv1d expects (N, {spec.in_channels}, L), got {x.shape}")
    if weight.shape != (spec.out_channels, spec.in_channels, spec.kernel_length):
        raise ShapeError(f"conv1d weight shape {weight.shape} does not match {spec}")
    n, c, length = x.shape
    k, s, d = spec.kernel_length, spec.stride, spec.dilation
    left, right = spec.pads
    lout = spec.output_length(length)
    xpad = np.pad(x.data, ((0, 0), (0, 0), (left, right))) if left or right else x.data
    stop = s * (lout - 1) + 1
    span = d * (k - 1) + 1
    win = np.lib.stride_tricks.sliding_window_view(xpad, span, axis=2)[:, :, :stop:s, ::d]
    # columns laid out (c*k, n*lout) so forward and both gradients are single GEMMs
    cols = win.transpose(1, 3, 0, 2).reshape(c * k, n * lout)
    w2 = weight.data.reshape(spec.out_channels, c * k)
    out = np.ascontiguousarray((w2 @ cols).reshape(spec.out_channels, n, lout).transpose(1, 0, 2))
    if bias is not None:
        out += bias.data[None, :, None]

    def backward(g):
        g2 = g.transpose(1, 0, 2).reshape(spec.out_channels, n * lout)
        if weight.requires_grad or weight._parents:
            weight._accumulate((g2 @ cols.T).reshape(weight.shape))
        if bias is not None and (bias.requires_grad or bias._parents):
            bias._accumulate(g2.sum(axis=1))
        if x.requires_grad or x._parents:
            gcols = (w2.T @ g2).reshape(c, k, n, lout).transpose(2, 0, 1, 3)
            gpad = np.zeros_like(xpad)
            for i in range(k):
                gpad[:, :, i * d : i * d + stop : s] += gcols[:, :, i, :]
            x._accumulate(gpad[:, :, left : left + length])

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, "conv1d", backward)


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape ``(N, in)``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense input {x.shape} vs weight {weight.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        if weight.requires_grad or weight._parents:
            weight._accumulate(g.T @ x.data)
        if bias is not None and (bias.requires_grad or bias._parents):
            bias._accumulate(g.sum(axis=0))
        if x.requires_grad or x._parents:
            x._accumulate(g @ weight.data)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, "dense", backward)


def max_pool1d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling; a trailing remainder shorter than ``size`` is dropped."""
    n, c, length = x.shape
    lout = length // size
    if lout < 1:
        raise ShapeError(f"cannot pool length {length} by {size}")
    win = x.data[:, :, : lout * size].reshape(n, c, lout, size)
    # running max over the window taps; much faster than argmax on a short last axis
    out = win[..., 0].copy()
    arg = np.zeros(out.shape, dtype=np.intp)
    for j in range(1, size):
        better = win[..., j] > out
        np.copyto(out, win[..., j], where=better)
        arg[better] = j

    def backward(g):
        gwin = np.zeros((n, c, lout, size))
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=3)
        gx = np.zeros(x.shape)
        gx[:, :, : lout * size] = gwin.reshape(n, c, lout * size)
        x._accumulate(gx)

    return _make(out, (x,), "max_pool1d", backward)


def upsample1d(x: Tensor, factor: int) -> Tensor:
    """Nearest-neighbour upsampling along the last axis."""
    out = np.repeat(x.data, factor, axis=2)
    n, c, length = x.shape
    return _make(
        out,
        (x,),
        "upsample1d",
        lambda g: x._accumulate(g.reshape(n, c, length, factor).sum(axis=3)),
    )


def global_avg_pool(x: Tensor) -> Tensor:
    """``(N, C, L) -> (N, C)``."""
    length = x.shape[2]
    out = x.data.mean(axis=2)
    return _make(
        out,
        (x,),
        "global_avg_pool",
        lambda g: x._accumulate(np.repeat(g[:, :, None] / length, length, axis=2)),
    )


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalisation over all axes but axis 1.

    In training mode batch statistics are used (population variance) and the
    running buffers are updated in place.
    """
    axes = (0,) if x.ndim == 2 else (0, 2)
    shape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)
    m = x.data.size // x.shape[1]

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=axes))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=axes))
        if x.requires_grad or x._parents:
            gxhat = g * gamma.data.reshape(shape)
            if training:
                s1 = gxhat.sum(axis=axes).reshape(shape)
                s2 = (gxhat * xhat).sum(axis=axes).reshape(shape)
                gx = inv.reshape(shape) / m * (m * gxhat - s1 - xhat * s2)
            else:
                gx = gxhat * inv.reshape(shape)
            x._accumulate(gx)

    return _make(out, (x, gamma, beta), "batch_norm", backward)


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), "dropout", lambda g: x._accumulate(g * keep))


__all__ = [
    "Conv1dSpec",
    "conv1d",
    "dense",
    "max_pool1d",
    "upsample1d",
    "global_avg_pool",
    "batch_norm",
    "dropout",
    "as_tensor",
]
