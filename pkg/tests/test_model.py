import numpy as np
import pytest

from fusiontof.io import Dataset
from fusiontof.model import (
    CheckpointError, MlpModel, TrainConfig, backward, forward, init_model, load_model,
    loss_mse, model_from_bytes, model_to_bytes, predict, save_model, split_indices, train,
)


def naive_forward(weights, biases, x):
    # independent oracle: explicit loops over neurons
    a = list(x)
    for k, (w, b) in enumerate(zip(weights, biases)):
        z = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += a[i] * w[i, j]
            z.append(s)
        if k < len(weights) - 1:
            a = [max(v, 0.0) for v in z]
        else:
            a = [1.0 / (1.0 + np.exp(-v)) for v in z]
    return np.array(a)


def test_init_is_deterministic():
    a = init_model([576, 1024, 1024, 4096], seed=1)
    b = init_model([576, 1024, 1024, 4096], seed=1)
    assert a.checksum() == b.checksum()
    assert a.checksum() != init_model([576, 1024, 1024, 4096], seed=2).checksum()
    assert all(not np.any(bias) for bias in a.biases)
    assert a.layer_dims == [576, 1024, 1024, 4096]


def test_init_variance():
    dims = [64, 48, 32, 16]
    for i, fan_in in enumerate(dims[:-1]):
        var = np.mean([init_model(dims, seed=s).weights[i].var() for s in range(10)])
        assert abs(var * fan_in - 1) < 0.2


def test_init_rejects_bad_dims():
    with pytest.raises(ValueError):
        init_model([4, 0, 2])
    with pytest.raises(ValueError):
        init_model([4, 2])


def test_forward_matches_naive_oracle():
    m = init_model([7, 5, 4, 3], seed=4)
    for b in m.biases:
        b += np.random.default_rng(0).normal(0, 0.1, b.shape)
    x = np.random.default_rng(1).uniform(0, 1, 7)
    assert np.allclose(forward(m, x), naive_forward(m.weights, m.biases, x), rtol=0, atol=1e-6)


def test_zero_model_outputs_half():
    m = init_model([6, 4, 3], seed=0)
    for p in m.parameters():
        p[...] = 0
    assert np.array_equal(forward(m, np.ones(6)), np.full(3, 0.5))


def test_forward_purity_range_and_errors():
    m = init_model([6, 4, 3], seed=0)
    x = np.random.default_rng(2).uniform(0, 1, 6)
    assert np.array_equal(forward(m, x), forward(m, x.copy()))
    out = forward(m, np.random.default_rng(3).normal(0, 3, (20, 6)))
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ValueError):
        forward(m, np.ones(5))


def test_loss_mse():
    t = np.random.default_rng(0).uniform(0, 1, 50)
    assert loss_mse(t, t) == 0.0
    assert loss_mse(t + 0.1, t) == pytest.approx(0.01, abs=1e-12)
    p = np.random.default_rng(1).uniform(0, 1, 50)
    oracle = sum((a - b) ** 2 for a, b in zip(p, t)) / 50
    assert abs(loss_mse(p, t) - oracle) < 1e-12
    with pytest.raises(ValueError):
        loss_mse(np.ones(3), np.ones(4))


def test_gradient_zero_at_minimum():
    m = init_model([5, 4, 3], seed=1)
    x = np.random.default_rng(0).uniform(0, 1, (4, 5))
    loss, g = backward(m, x, forward(m, x))
    assert loss == 0.0
    assert all(not np.any(a) for a in g.weights + g.biases)


def test_linear_layer_gradient_closed_form():
    rng = np.random.default_rng(5)
    w = rng.normal(size=(4, 3))
    b = rng.normal(size=3)
    m = MlpModel([w], [b], output_activation="linear")
    x = rng.normal(size=(6, 4))
    y = rng.normal(size=(6, 3))
    loss, g = backward(m, x, y)
    r = x @ w + b - y
    assert np.allclose(g.weights[0], 2 * x.T @ r / r.size, rtol=0, atol=1e-10)
    assert np.allclose(g.biases[0], 2 * r.sum(axis=0) / r.size, rtol=0, atol=1e-10)
    assert loss == pytest.approx(np.mean(r ** 2), abs=1e-12)


def finite_difference_error(seed, eps=1e-4):
    rng = np.random.default_rng(seed)
    m = init_model([8, 6, 4], seed=seed)
    for b in m.biases:
        b[...] = rng.normal(0, 0.5, b.shape)
    x = rng.uniform(0, 1, (3, 8))
    y = rng.uniform(0, 1, (3, 4))
    _, g = backward(m, x, y)
    worst = 0.0
    analytic = []
    for w, b in zip(g.weights, g.biases):
        analytic += [w, b]
    for p, gp in zip(m.parameters(), analytic):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            up = loss_mse(forward(m, x), y)
            p[idx] = old - eps
            down = loss_mse(forward(m, x), y)
            p[idx] = old
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - gp[idx]) / max(abs(num), abs(gp[idx]), 1e-8))
    return worst


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_finite_difference_gradients(seed):
    assert finite_difference_error(seed) < 1e-4


def toy_dataset(n=10, d_in=12, side=4, seed=0):
    rng = np.random.default_rng(seed)
    fused = rng.uniform(0, 1, (n, d_in)).astype(np.float32)
    truth = rng.uniform(1.0, 6.0, (n, side * side)).astype(np.float32)
    return Dataset(fused, truth, d_in - 4, 4, side, side)


def test_train_is_deterministic():
    ds = toy_dataset(40)
    cfg = TrainConfig(epochs=5, batch_size=8, hidden=(16,), seed=3)
    m1, r1 = train(ds, cfg)
    m2, r2 = train(ds, cfg)
    assert m1.checksum() == m2.checksum()
    assert r1.train_loss == r2.train_loss and r1.test_ssim == r2.test_ssim
    assert len(r1.train_loss) == len(r1.test_loss) == len(r1.test_ssim) == 5
    assert r1.n_train == 36 and r1.n_test == 4


def test_split_protocol():
    tr, te = split_indices(4000, 0.9, 0)
    assert tr.size == 3600 and te.size == 400
    assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(4000))


def test_train_validation():
    with pytest.raises(ValueError):
        train(toy_dataset(5), TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        TrainConfig(split_ratio=1.0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


def test_nan_loss_reports_epoch():
    ds = toy_dataset(20)
    ds.fused[3, 0] = np.nan
    with pytest.raises(FloatingPointError, match="epoch 1"):
        train(ds, TrainConfig(epochs=2, hidden=(8,)))


def test_momentum_optimizer_reduces_loss():
    ds = toy_dataset(20)
    _, r = train(ds, TrainConfig(epochs=60, batch_size=20, hidden=(32,), optimizer="sgd_momentum",
                                 learning_rate=0.5, dtype="float64"))
    assert r.train_loss[-1] < 0.8 * r.train_loss[0]


def test_predict_shapes_and_purity():
    m = init_model([12, 8, 16], seed=0, map_width=4, map_height=4)
    x = np.random.default_rng(0).uniform(0, 1, 12)
    a, b = predict(m, x), predict(m, x.copy())
    assert a.depth.shape == (4, 4)
    assert np.array_equal(a.depth, b.depth)
    assert np.all((a.depth > 0) & (a.depth < 6.0))
    with pytest.raises(ValueError):
        predict(init_model([12, 8, 15], seed=0, map_width=4, map_height=4), x)


def test_checkpoint_round_trip(tmp_path):
    m = init_model([12, 8, 16], seed=7, photon_len=8, radar_len=4, map_width=4, map_height=4,
                   fov_x=0.5, fov_y=0.5)
    path = tmp_path / "m.ftmk"
    save_model(m, path)
    r = load_model(path)
    assert r.checksum() == m.checksum()
    assert r.metadata() == m.metadata()
    assert model_to_bytes(r) == path.read_bytes()
    raw = path.read_bytes()
    # dims follow magic, version and count
    assert raw[:4] == b"FTMK"
    assert np.frombuffer(raw, "<u4", 3, 12).tolist() == [12, 8, 16]


def test_checkpoint_errors():
    raw = model_to_bytes(init_model([4, 3, 2], seed=0))
    with pytest.raises(CheckpointError, match="magic"):
        model_from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="version"):
        model_from_bytes(raw[:4] + (9).to_bytes(4, "little") + raw[8:])
    with pytest.raises(CheckpointError):
        model_from_bytes(raw[:-1])
    with pytest.raises(CheckpointError):
        model_from_bytes(raw[:10])
