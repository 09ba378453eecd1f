import numpy as np
import pytest

from bearingrul.autodiff import (
    BatchNorm1d,
    Conv1d,
    Conv1dSpec,
    Dense,
    Dropout,
    EarlyStopping,
    NoDataError,
    OptimState,
    Parameter,
    ShapeError,
    Tensor,
    TrainConfig,
    adamw_step,
    batch_norm,
    conv1d,
    dense,
    dropout,
    fit,
    global_avg_pool,
    leaky_relu,
    max_pool1d,
    mse,
    relu,
    sigmoid,
    soft_threshold,
    tabs,
    take_rows,
    tsum,
    upsample1d,
)
from bearingrul.autodiff.train import split_indices

from .gradcheck import check

SEEDS = range(20)
TOL = 1e-4


def leaf(rng, *shape, scale=1.0):
    return Parameter(rng.standard_normal(shape) * scale)


def projected(out_fn, shape_rng):
    """Scalar loss sum(out * R) with a fixed random R."""
    cache = {}

    def build():
        out = out_fn()
        if "R" not in cache:
            cache["R"] = shape_rng.standard_normal(out.shape)
        return tsum(out * cache["R"])

    return build


# conv settings used by the ASTCN stem/blocks and the autoencoder tables
CONV_CASES = [
    dict(kernel_length=3, in_channels=2, out_channels=3, dilation=1, causal=True),
    dict(kernel_length=3, in_channels=3, out_channels=2, dilation=2, causal=True),
    dict(kernel_length=3, in_channels=2, out_channels=2, dilation=4, causal=True),
    dict(kernel_length=12, in_channels=2, out_channels=3, stride=4),
    dict(kernel_length=3, in_channels=1, out_channels=4, padding=1),
    dict(kernel_length=3, in_channels=2, out_channels=3, padding=0),
    dict(kernel_length=3, in_channels=3, out_channels=1, padding=2),
    dict(kernel_length=1, in_channels=3, out_channels=2),
]


@pytest.mark.parametrize("case", range(len(CONV_CASES)))
@pytest.mark.parametrize("seed", SEEDS)
def test_conv1d_gradients(case, seed):
    rng = np.random.default_rng(seed)
    spec = Conv1dSpec(**CONV_CASES[case])
    length = 40 if spec.kernel_length == 12 else 13
    x = leaf(rng, 2, spec.in_channels, length)
    w = leaf(rng, spec.out_channels, spec.in_channels, spec.kernel_length)
    b = leaf(rng, spec.out_channels)
    assert check(projected(lambda: conv1d(x, spec, w, b), rng), [x, w, b]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradients(seed):
    rng = np.random.default_rng(seed)
    x, w, b = leaf(rng, 4, 5), leaf(rng, 3, 5), leaf(rng, 3)
    assert check(projected(lambda: dense(x, w, b), rng), [x, w, b]) < TOL


@pytest.mark.parametrize("ndim", [2, 3])
@pytest.mark.parametrize("seed", SEEDS)
def test_batch_norm_train_gradients(seed, ndim):
    rng = np.random.default_rng(seed)
    shape = (5, 3) if ndim == 2 else (4, 3, 6)
    x = leaf(rng, *shape)
    g, b = Parameter(rng.uniform(0.5, 1.5, 3)), leaf(rng, 3)

    def out():
        return batch_norm(x, g, b, np.zeros(3), np.ones(3), training=True)

    assert check(projected(out, rng), [x, g, b]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_batch_norm_eval_gradients(seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, 4, 3, 5)
    g, b = leaf(rng, 3), leaf(rng, 3)
    rm, rv = rng.standard_normal(3), rng.uniform(0.5, 2, 3)
    assert check(projected(lambda: batch_norm(x, g, b, rm, rv, training=False), rng), [x, g, b]) < TOL


def away_from(rng, shape, points, gap=1e-2):
    """Random values at least ``gap`` away from each of ``points``."""
    x = rng.standard_normal(shape)
    for p in points:
        near = np.abs(x - p) < gap
        x[near] += 3 * gap * np.sign(x[near] - p + 1e-300)
    return Parameter(x)


@pytest.mark.parametrize("seed", SEEDS)
def test_activation_gradients(seed):
    rng = np.random.default_rng(seed)
    x = away_from(rng, (3, 4, 5), [0.0])
    assert check(projected(lambda: leaky_relu(x, 0.2), rng), [x]) < TOL
    assert check(projected(lambda: relu(x), rng), [x]) < TOL
    assert check(projected(lambda: sigmoid(x), rng), [x]) < TOL
    assert check(projected(lambda: tabs(x), rng), [x]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_soft_threshold_gradients(seed):
    rng = np.random.default_rng(seed)
    tau = Parameter(rng.uniform(0.2, 0.8, (2, 3, 1)))
    x = rng.standard_normal((2, 3, 7)) * 2
    # keep every sample clear of the kink at +-tau
    for sgn in (1, -1):
        near = np.abs(x - sgn * tau.data) < 0.05
        x[near] += 0.2
    x = Parameter(x)
    assert check(projected(lambda: soft_threshold(x, tau), rng), [x, tau]) < TOL


@pytest.mark.parametrize("size", [2, 4])
@pytest.mark.parametrize("seed", SEEDS)
def test_pool_upsample_gap_gradients(seed, size):
    rng = np.random.default_rng(seed)
    x = leaf(rng, 2, 3, 4 * size + 1)
    assert check(projected(lambda: max_pool1d(x, size), rng), [x]) < TOL
    y = leaf(rng, 2, 3, 5)
    assert check(projected(lambda: upsample1d(y, size), rng), [y]) < TOL
    assert check(projected(lambda: global_avg_pool(y), rng), [y]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_dropout_and_gather_gradients(seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, 3, 4, 5)
    assert check(
        projected(lambda: dropout(x, 0.3, True, np.random.default_rng(seed)), rng), [x]
    ) < TOL
    table = leaf(rng, 5, 3)
    idx = rng.integers(0, 5, size=8)
    assert check(projected(lambda: take_rows(table, idx), rng), [table]) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_mse_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    p, t = leaf(rng, 4, 3), Tensor(rng.standard_normal((4, 3)))
    assert check(lambda: mse(p, t), [p]) < TOL


def test_causal_conv_examples():
    one = Tensor(np.ones((1, 1, 2)))
    x = Tensor([[[1.0, 2.0, 3.0]]])
    assert conv1d(x, Conv1dSpec(2, 1, 1, causal=True), one).data.ravel().tolist() == [1, 3, 5]
    x = Tensor([[[1.0, 2.0, 3.0, 4.0]]])
    out = conv1d(x, Conv1dSpec(2, 1, 1, dilation=2, causal=True), one).data.ravel()
    assert out.tolist() == [1, 2, 4, 6]


@pytest.mark.parametrize("d", [1, 2, 5])
def test_identity_kernel(d):
    x = Tensor(np.random.default_rng(0).standard_normal((2, 1, 9)))
    out = conv1d(x, Conv1dSpec(1, 1, 1, dilation=d), Tensor(np.ones((1, 1, 1))), Tensor(np.zeros(1)))
    np.testing.assert_array_equal(out.data, x.data)


def test_conv_shape_errors():
    x = Tensor(np.zeros((1, 2, 8)))
    with pytest.raises(ShapeError):
        conv1d(x, Conv1dSpec(3, 3, 1), Tensor(np.zeros((1, 3, 3))))
    with pytest.raises(ShapeError):
        conv1d(x, Conv1dSpec(3, 2, 1), Tensor(np.zeros((1, 2, 4))))


def test_conv_output_length():
    assert Conv1dSpec(12, 2, 16, stride=4).output_length(2560) == 638
    assert Conv1dSpec(3, 1, 1, dilation=4, causal=True).output_length(50) == 50


def test_causality_and_receptive_field():
    rng = np.random.default_rng(3)
    convs = [Conv1d(Conv1dSpec(3, 2, 2, dilation=d, causal=True), rng) for d in (1, 2, 4)]

    def stack(x):
        for c in convs:
            x = c(x)
        return x.data

    x = rng.standard_normal((1, 2, 60))
    base = stack(Tensor(x))
    t0 = 30
    x2 = x.copy()
    x2[0, :, t0] += 1.0
    changed = np.abs(stack(Tensor(x2)) - base).max(axis=(0, 1)) > 0
    assert not changed[:t0].any()
    # an input at t0 reaches outputs t0 .. t0 + 14: receptive field 1 + 2*(1+2+4) = 15
    assert np.flatnonzero(changed).tolist() == list(range(t0, t0 + 15))


def test_batch_norm_train_statistics():
    x = Tensor(np.random.default_rng(1).standard_normal((16, 3, 10)) * 5 + 2)
    bn = BatchNorm1d(3)
    out = bn(x).data
    np.testing.assert_allclose(out.mean(axis=(0, 2)), 0, atol=1e-5)
    np.testing.assert_allclose(out.var(axis=(0, 2)), 1, atol=1e-5)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.data.mean(axis=(0, 2)))


def test_dropout_eval_is_identity():
    d = Dropout(0.3)
    d.eval()
    x = Tensor(np.arange(10.0))
    assert d(x) is x


def test_soft_threshold_examples():
    assert soft_threshold(Tensor(0.5), Tensor(1.0)).item() == 0.0
    assert soft_threshold(Tensor(2.0), Tensor(1.0)).item() == 1.0
    assert soft_threshold(Tensor(-2.0), Tensor(1.0)).item() == -1.0
    x = np.random.default_rng(0).standard_normal(20)
    np.testing.assert_array_equal(soft_threshold(Tensor(x), Tensor(0.0)).data, x)
    with pytest.raises(ValueError):
        soft_threshold(Tensor(x), Tensor(-0.1))


def test_backward_examples():
    ps = [Parameter(v) for v in (1.0, -2.0, 3.5)]
    loss = ps[0] + ps[1] + ps[2]
    loss.backward()
    assert [p.grad for p in ps] == [1.0, 1.0, 1.0]
    with pytest.raises(ValueError):
        Tensor(np.ones(3)).backward()

    # one-layer dense net, one sample: d/dW mean((Wx + b - y)^2) = 2/m (Wx + b - y) x^T
    rng = np.random.default_rng(0)
    W, b = Parameter(rng.standard_normal((2, 3))), Parameter(rng.standard_normal(2))
    x, y = rng.standard_normal(3), rng.standard_normal(2)
    mse(dense(Tensor(x[None]), W, b), Tensor(y[None])).backward()
    r = W.data @ x + b.data - y
    np.testing.assert_allclose(W.grad, np.outer(r, x), rtol=1e-12)
    np.testing.assert_allclose(b.grad, r, rtol=1e-12)


def test_unreached_parameter_gets_no_gradient():
    a, b = Parameter(1.0), Parameter(2.0)
    (a * 3.0).backward()
    assert a.grad == 3.0 and b.grad is None


def test_adamw_examples():
    cfg = TrainConfig(learning_rate=0.1, weight_decay=0.5)
    p = [np.array([2.0, -4.0])]
    st = OptimState.for_params(p)
    out = adamw_step(p, [np.zeros(2)], st, cfg)
    np.testing.assert_allclose(out[0], p[0] * (1 - 0.1 * 0.5))

    cfg0 = TrainConfig(learning_rate=0.1, weight_decay=0.0)
    out = adamw_step(p, [None], OptimState.for_params(p), cfg0)
    np.testing.assert_array_equal(out[0], p[0])

    # m1 = 0.1 g, v1 = 0.001 g^2 -> bias-corrected step = lr * g / (|g| + eps)
    out = adamw_step([np.zeros(1)], [np.ones(1)], OptimState.for_params([np.zeros(1)]), cfg0)
    assert out[0][0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)


def test_train_config_invariants():
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=10, patience=10)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)


def test_early_stopping_counter():
    es = EarlyStopping(15)
    stops = [es.update(e, float(e)) for e in range(1, 40)]
    assert [s for _, s in stops].index(True) + 1 == 16
    assert es.best_epoch == 1


class Line(Dense):
    def loss(self, x, y):
        return mse(self(Tensor(x)), Tensor(y))


def _line_loss(m, xb, yb):
    return m.loss(xb, yb)


def test_fit_early_stop_returns_best_epoch():
    # train on y = 2x while validating on y = -2x: validation loss rises every epoch
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (64, 1))
    model = Line(1, 1, np.random.default_rng(1))
    model.weight.data[:] = 0.0
    cfg = TrainConfig(learning_rate=0.01, batch_size=16, max_epochs=100, patience=15, weight_decay=0.0)
    res = fit(model, (x, 2 * x), _line_loss, cfg, val_data=(x, -2 * x))
    vals = [h["val_loss"] for h in res.history]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert res.stopped_epoch == 16 and res.best_epoch == 1

    ref = Line(1, 1, np.random.default_rng(1))
    ref.weight.data[:] = 0.0
    one = TrainConfig(learning_rate=0.01, batch_size=16, max_epochs=2, patience=1, weight_decay=0.0)
    fit(ref, (x, 2 * x), _line_loss, one, val_data=(x, -2 * x))
    np.testing.assert_array_equal(model.weight.data, ref.weight.data)


def test_fit_is_deterministic_per_seed():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (100, 1))
    y = 2 * x + 1
    cfg = TrainConfig(learning_rate=0.01, batch_size=10, max_epochs=20, patience=5, seed=15)
    h1 = fit(Line(1, 1, np.random.default_rng(0)), (x, y), _line_loss, cfg).history
    h2 = fit(Line(1, 1, np.random.default_rng(0)), (x, y), _line_loss, cfg).history
    assert h1 == h2


def test_fit_linear_regression_converges():
    x = np.linspace(-1, 1, 100)[:, None]
    y = 2 * x + 1
    cfg = TrainConfig(learning_rate=0.05, batch_size=10, max_epochs=200, patience=30, weight_decay=0.0)
    res = fit(Line(1, 1, np.random.default_rng(0)), (x, y), _line_loss, cfg)
    assert res.history[-1]["train_loss"] < 1e-3 or res.history[res.best_epoch - 1]["train_loss"] < 1e-3


def test_fit_empty_dataset():
    with pytest.raises(NoDataError):
        fit(Line(1, 1, np.random.default_rng(0)), (np.zeros((0, 1)), np.zeros((0, 1))), _line_loss, TrainConfig())


def test_split_indices_partition():
    tr, va = split_indices(50, 0.1, 15)
    assert len(va) == 5 and len(set(tr) | set(va)) == 50 and not set(tr) & set(va)
    np.testing.assert_array_equal(split_indices(50, 0.1, 15)[1], va)
