"""Module system and the layer set used by the autoencoders and the ASTCN."""

from __future__ import annotations

import numpy as np

from . import ops
from .ops import Conv1dSpec
from .tensor import Tensor, leaky_relu, relu, sigmoid, tabs


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(data, requires_grad=True)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def modules(self):
        yield self
        for _, child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.children():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for name in getattr(self, "_buffers", ()):
            yield prefix + name, getattr(self, name)
        for name, child in self.children():
            yield from child.named_buffers(f"{prefix}{name}.")

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def reseed(self, seed):
        """Give every dropout layer its own deterministic stream derived from ``seed``."""
        drops = [m for m in self.modules() if isinstance(m, Dropout)]
        for m, child in zip(drops, np.random.SeedSequence(seed).spawn(len(drops))):
            m.rng = np.random.default_rng(child)

    def state_dict(self):
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        bufs = dict(self.named_buffers())
        missing = (set(own) | set(bufs)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.data.shape}")
            p.data = np.array(state[name], dtype=np.float64)
        for name, b in bufs.items():
            b[...] = state[name]

    def num_parameters(self):
        return sum(p.size for p in self.parameters())


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


class Conv1d(Module):
    def __init__(self, spec: Conv1dSpec, rng: np.random.Generator, bias=True):
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel_length
        shape = (spec.out_channels, spec.in_channels, spec.kernel_length)
        self.weight = Parameter(kaiming_uniform(rng, shape, fan_in))
        self.bias = Parameter(np.zeros(spec.out_channels)) if bias else None

    def forward(self, x):
        return ops.conv1d(x, self.spec, self.weight, self.bias)


class Dense(Module):
    def __init__(self, in_features, out_features, rng: np.random.Generator, bias=True):
        self.weight = Parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features)) if bias else None

    def forward(self, x):
        return ops.dense(x, self.weight, self.bias)


class BatchNorm1d(Module):
    _buffers = ("running_mean", "running_var")

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.training,
            self.momentum,
            self.eps,
        )


class Dropout(Module):
    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = np.random.default_rng(0)

    def forward(self, x):
        return ops.dropout(x, self.rate, self.training, self.rng)


class MaxPool1d(Module):
    def __init__(self, size):
        self.size = size

    def forward(self, x):
        return ops.max_pool1d(x, self.size)


class Upsample1d(Module):
    def __init__(self, factor):
        self.factor = factor

    def forward(self, x):
        return ops.upsample1d(x, self.factor)


class ReLU(Module):
    def forward(self, x):
        return relu(x)


class LeakyReLU(Module):
    def __init__(self, slope=0.2):
        self.slope = slope

    def forward(self, x):
        return leaky_relu(x, self.slope)


class Sigmoid(Module):
    def forward(self, x):
        return sigmoid(x)


class Abs(Module):
    def forward(self, x):
        return tabs(x)


class GlobalAvgPool(Module):
    def forward(self, x):
        return ops.global_avg_pool(x)
