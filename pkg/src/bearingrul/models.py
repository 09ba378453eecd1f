"""Network families: convolutional AE, VQ-VAE with a learned codebook, and the ASTCN.

All networks consume batches shaped ``(N, C, L)``.  Latents are exposed as
``(N, D, P)`` feature maps (``D`` channels at ``P`` positions); flattened
latents are position-major, i.e. ``P x D`` row-major.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Abs,
    BatchNorm1d,
    Conv1d,
    Conv1dSpec,
    Dense,
    Dropout,
    GlobalAvgPool,
    LeakyReLU,
    MaxPool1d,
    Module,
    Parameter,
    ReLU,
    Sequential,
    ShapeError,
    Sigmoid,
    Tensor,
    Upsample1d,
    add,
    load_checkpoint,
    mse,
    relu,
    reshape,
    save_checkpoint,
    soft_threshold,
    stop_gradient,
    take_rows,
    transpose,
)

RAW_INPUT_LENGTH = 1024
FEATURE_INPUT_LENGTH = 38
DEFAULT_BETA = 0.25


@dataclass(frozen=True)
class Stage:
    """One encoder step: 3-tap convolution, optional BN+ReLU, optional max-pool."""

    out_channels: int
    pool: int | None = None
    valid: bool = False
    activate: bool = True


# encoder layouts; the last stage emits the latent and is left linear
AE_RAW = (Stage(16, 2), Stage(32, 2), Stage(64, 4), Stage(128, 2), Stage(32), Stage(1, activate=False))
AE_FEAT = (
    Stage(16, 2, valid=True),
    Stage(32, 2),
    Stage(64),
    Stage(128),
    Stage(32),
    Stage(1, activate=False),
)
VQVAE_RAW = (Stage(4, 2), Stage(4, 2), Stage(8, 2), Stage(8, 2), Stage(16, 2), Stage(16, activate=False))
VQVAE_FEAT = (Stage(4, 2, valid=True), Stage(4, 2), Stage(8), Stage(16), Stage(4, activate=False))

ARCHITECTURES = {
    "ae-raw": (AE_RAW, RAW_INPUT_LENGTH),
    "ae-feat": (AE_FEAT, FEATURE_INPUT_LENGTH),
    "vqvae-raw": (VQVAE_RAW, RAW_INPUT_LENGTH),
    "vqvae-feat": (VQVAE_FEAT, FEATURE_INPUT_LENGTH),
}


def _conv(cin, cout, rng, pad):
    return Conv1d(Conv1dSpec(3, cin, cout, padding=pad), rng)


def build_encoder(stages, rng):
    layers, cin = [], 1
    for st in stages:
        layers.append(_conv(cin, st.out_channels, rng, 0 if st.valid else 1))
        if st.activate:
            layers += [BatchNorm1d(st.out_channels), ReLU()]
        if st.pool:
            layers.append(MaxPool1d(st.pool))
        cin = st.out_channels
    return Sequential(*layers)


def build_decoder(stages, rng):
    """Mirror of :func:`build_encoder`: pools become upsampling, valid convs become full-padded."""
    chans = [1] + [st.out_channels for st in stages]
    layers = []
    for i in reversed(range(len(stages))):
        st = stages[i]
        if st.pool:
            layers.append(Upsample1d(st.pool))
        layers.append(_conv(chans[i + 1], chans[i], rng, 2 if st.valid else 1))
        if i > 0:
            layers += [BatchNorm1d(chans[i]), ReLU()]
    return Sequential(*layers)


class ConvAutoencoder(Module):
    def __init__(self, arch="ae-raw", seed=0):
        stages, self.input_length = ARCHITECTURES[arch]
        self.arch = arch
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.encoder = build_encoder(stages, rng)
        self.decoder = build_decoder(stages, rng)

    def _check(self, x):
        if x.ndim != 3 or x.shape[1:] != (1, self.input_length):
            raise ShapeError(f"{self.arch} expects (N, 1, {self.input_length}), got {x.shape}")

    def encode(self, x):
        self._check(x)
        return self.encoder(x)

    def forward(self, x):
        return self.decoder(self.encode(x))

    def loss(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        return mse(self(x), x)


class Codebook(Module):
    def __init__(self, num_codes, dim, rng):
        if num_codes < 1 or dim < 1:
            raise ValueError("codebook needs K >= 1 and D >= 1")
        self.embeddings = Parameter(rng.uniform(-1.0 / num_codes, 1.0 / num_codes, (num_codes, dim)))
        self.usage = np.zeros(num_codes)

    @property
    def num_codes(self):
        return self.embeddings.shape[0]

    @property
    def dim(self):
        return self.embeddings.shape[1]


def nearest_codes(vectors: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """Index of the nearest embedding (L2) for each row; ties go to the lowest index."""
    if vectors.shape[-1] != embeddings.shape[1]:
        raise ShapeError(f"latent dim {vectors.shape[-1]} != codebook dim {embeddings.shape[1]}")
    diff = vectors[:, None, :] - embeddings[None, :, :]
    return np.argmin(np.einsum("nkd,nkd->nk", diff, diff), axis=1)


def vq_quantize(z_e: np.ndarray, codebook) -> tuple[np.ndarray, np.ndarray]:
    """Snap each row of a ``P x D`` latent to its nearest code."""
    emb = codebook.embeddings.data if isinstance(codebook, Codebook) else np.asarray(codebook)
    z_e = np.asarray(z_e, dtype=np.float64)
    idx = nearest_codes(z_e, emb)
    return emb[idx], idx


def perplexity(indices, num_codes) -> float:
    """``exp`` of the entropy of code usage; 1 means collapse, ``K`` means uniform use."""
    counts = np.bincount(np.ravel(indices), minlength=num_codes).astype(float)
    p = counts / counts.sum()
    p = p[p > 0]
    return float(np.exp(-(p * np.log(p)).sum()))


def vqvae_loss(x, x_hat, z_e, z_q, beta=DEFAULT_BETA):
    """Reconstruction MSE + codebook term + beta * commitment term.

    The squared norms are averaged over elements.  The codebook term only
    reaches ``z_q`` and the commitment term only reaches ``z_e``.
    """
    if z_e.shape != z_q.shape:
        raise ShapeError(f"z_e {z_e.shape} vs z_q {z_q.shape}")
    x = x if isinstance(x, Tensor) else Tensor(x)
    return mse(x_hat, x) + mse(stop_gradient(z_e), z_q) + beta * mse(z_e, stop_gradient(z_q))


def quantize_latent(z_e: Tensor, codebook: Codebook):
    """Quantize an ``(N, D, P)`` latent; returns ``(z_q, indices)`` with ``indices`` shaped ``(N, P)``."""
    n, d, p = z_e.shape
    if d != codebook.dim:
        raise ShapeError(f"latent has {d} channels, codebook dim is {codebook.dim}")
    flat = z_e.data.transpose(0, 2, 1).reshape(-1, d)
    idx = nearest_codes(flat, codebook.embeddings.data)
    zq = take_rows(codebook.embeddings, idx)
    zq = transpose(reshape(zq, (n, p, d)), (0, 2, 1))
    return zq, idx.reshape(n, p)


class VqVae(ConvAutoencoder):
    def __init__(self, arch="vqvae-raw", seed=0, num_codes=32, beta=DEFAULT_BETA):
        super().__init__(arch, seed)
        dim = ARCHITECTURES[arch][0][-1].out_channels
        self.beta = beta
        self.codebook = Codebook(num_codes, dim, np.random.default_rng([seed, 1]))

    def forward_full(self, x):
        z_e = self.encode(x)
        z_q, idx = quantize_latent(z_e, self.codebook)
        # straight-through: decoder sees z_q, gradients flow to z_e unchanged
        dec_in = add(z_e, Tensor(z_q.data - z_e.data))
        x_hat = self.decoder(dec_in)
        if self.training:
            self.codebook.usage += np.bincount(idx.ravel(), minlength=self.codebook.num_codes)
        return x_hat, z_e, z_q, idx

    def forward(self, x):
        return self.forward_full(x)[0]

    def loss(self, x):
        x = x if isinstance(x, Tensor) else Tensor(x)
        x_hat, z_e, z_q, _ = self.forward_full(x)
        return vqvae_loss(x, x_hat, z_e, z_q, self.beta)


def encode_latent(model, windows) -> np.ndarray:
    """Evaluation-mode latents, flattened position-major to ``(N, P*D)``."""
    model.eval()
    x = windows if isinstance(windows, Tensor) else Tensor(windows)
    if x.ndim == 1:
        x = Tensor(x.data[None, None, :])
    elif x.ndim == 2:
        x = Tensor(x.data[:, None, :])
    z = model.encode(x).data
    return z.transpose(0, 2, 1).reshape(len(z), -1)


class ASModule(Module):
    """Per-channel threshold: ``tau = h * sigmoid(BN(dense(h)))`` with ``h = mean |f|``."""

    def __init__(self, channels, rng):
        self.abs = Abs()
        self.pool = GlobalAvgPool()
        self.dense = Dense(channels, channels, rng)
        self.bn = BatchNorm1d(channels)
        self.gate = Sigmoid()

    def forward(self, f):
        h = self.pool(self.abs(f))
        return h * self.gate(self.bn(self.dense(h)))


def as_threshold(feature_map, as_params: ASModule) -> Tensor:
    x = feature_map if isinstance(feature_map, Tensor) else Tensor(feature_map)
    if x.ndim == 2:
        return reshape(as_params(Tensor(x.data[None])), (x.shape[0],))
    return as_params(x)


class AstcnBlock(Module):
    def __init__(self, cin, cout, dilation, rng, kernel=3, slope=0.2, drop=0.3):
        self.bn1 = BatchNorm1d(cin)
        self.act1 = LeakyReLU(slope)
        self.drop1 = Dropout(drop)
        self.conv1 = Conv1d(Conv1dSpec(kernel, cin, cout, dilation=dilation, causal=True), rng)
        self.bn2 = BatchNorm1d(cout)
        self.act2 = LeakyReLU(slope)
        self.drop2 = Dropout(drop)
        self.conv2 = Conv1d(Conv1dSpec(kernel, cout, cout, dilation=dilation, causal=True), rng)
        self.shrink = ASModule(cout, rng)
        self.project = Conv1d(Conv1dSpec(1, cin, cout), rng)

    def forward(self, x):
        if x.shape[1] != self.conv1.spec.in_channels:
            raise ShapeError(f"block expects {self.conv1.spec.in_channels} channels, got {x.shape[1]}")
        f = self.conv1(self.drop1(self.act1(self.bn1(x))))
        f = self.conv2(self.drop2(self.act2(self.bn2(f))))
        tau = self.shrink(f)
        n, c = tau.shape
        return soft_threshold(f, reshape(tau, (n, c, 1))) + self.project(x)


ASTCN_STEM = dict(kernel=12, channels=16, stride=4, pool=4, dropout=0.3)
ASTCN_BLOCKS = ((12, 1), (6, 2), (4, 4))


class Astcn(Module):
    arch = "astcn"

    def __init__(self, seed=0, in_channels=2, input_length=2560, head_bias=0.5):
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.in_channels = in_channels
        self.input_length = input_length
        st = ASTCN_STEM
        self.stem = Conv1d(Conv1dSpec(st["kernel"], in_channels, st["channels"], stride=st["stride"]), rng)
        self.pool = MaxPool1d(st["pool"])
        self.drop = Dropout(st["dropout"])
        blocks, cin = [], st["channels"]
        for cout, d in ASTCN_BLOCKS:
            blocks.append(AstcnBlock(cin, cout, d, rng))
            cin = cout
        self.blocks = blocks
        self.gap = GlobalAvgPool()
        self.head = Dense(cin, 1, rng)
        # start every sample at head_bias, inside the label range, so the ReLU is
        # live at init regardless of the pooled feature scale
        self.head.weight.data[:] = 0.0
        self.head.bias.data[:] = head_bias

    def forward(self, x):
        if x.ndim != 3 or x.shape[1:] != (self.in_channels, self.input_length):
            raise ShapeError(f"astcn expects (N, {self.in_channels}, {self.input_length}), got {x.shape}")
        h = self.drop(self.pool(self.stem(x)))
        for block in self.blocks:
            h = block(h)
        out = relu(self.head(self.gap(h)))
        return reshape(out, (x.shape[0],))

    def loss(self, x, y):
        x = x if isinstance(x, Tensor) else Tensor(x)
        return mse(self(x), Tensor(y))


def astcn_forward(model: Astcn, sample) -> float:
    """Predicted RUL fraction for a single ``(2, L)`` record."""
    x = np.asarray(sample.data if isinstance(sample, Tensor) else sample, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a (channels, length) record, got {x.shape}")
    model.eval()
    return float(model(Tensor(x[None])).data[0])


# checkpoints ---------------------------------------------------------------


def model_config(model) -> dict:
    if isinstance(model, VqVae):
        return {"num_codes": model.codebook.num_codes, "beta": model.beta}
    if isinstance(model, Astcn):
        return {"in_channels": model.in_channels, "input_length": model.input_length}
    return {}


def save_model(model, path, seed=None, **extra):
    state = model.state_dict()
    if isinstance(model, VqVae):
        state["codebook.usage"] = model.codebook.usage.copy()
    return save_checkpoint(
        path, model.arch, state, model_config(model), seed=model.seed if seed is None else seed, **extra
    )


def build_model(arch, seed=0, **config):
    if arch == "astcn":
        return Astcn(seed=seed, **config)
    if arch.startswith("vqvae"):
        return VqVae(arch, seed=seed, **config)
    if arch.startswith("ae"):
        return ConvAutoencoder(arch, seed=seed)
    raise ValueError(f"unknown architecture {arch!r}")


def load_model(path):
    meta, arrays = load_checkpoint(path)
    model = build_model(meta["arch"], seed=meta.get("seed") or 0, **meta["config"])
    usage = arrays.pop("codebook.usage", None)
    model.load_state_dict(arrays)
    if usage is not None:
        model.codebook.usage = usage
    model.eval()
    return model
