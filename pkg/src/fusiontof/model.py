"""Fully-connected network mapping fused 1D measurements to depth maps.

Forward and backward passes are written out by hand with numpy; the
parameters of layer ``i`` are ``weights[i]`` of shape (fan_in, fan_out) and
``biases[i]`` of shape (fan_out,), applied to row-vector batches as
``x @ W + b``.
"""

from __future__ import annotations

import hashlib
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .fusion import MODES, apply_mode
from .metrics import ssim_rows
from .scene import DepthMap

CHECKPOINT_MAGIC = b"FTMK"
CHECKPOINT_VERSION = 1
DEPTH_SCALE = 6.0
OUTPUT_ACTIVATIONS = ("sigmoid", "linear")


class CheckpointError(ValueError):
    pass


@dataclass
class MlpModel:
    weights: list
    biases: list
    photon_len: int = 0
    radar_len: int = 0
    map_width: int = 0
    map_height: int = 0
    depth_scale: float = DEPTH_SCALE
    fov_x: float = float("nan")
    fov_y: float = float("nan")
    output_activation: str = "sigmoid"
    mode: str = "fusion"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} input {w.shape[0]} != previous output")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def astype(self, dtype) -> "MlpModel":
        return MlpModel([w.astype(dtype) for w in self.weights],
                        [b.astype(dtype) for b in self.biases],
                        **self.metadata())

    def metadata(self) -> dict:
        return dict(photon_len=self.photon_len, radar_len=self.radar_len,
                    map_width=self.map_width, map_height=self.map_height,
                    depth_scale=self.depth_scale, fov_x=self.fov_x, fov_y=self.fov_y,
                    output_activation=self.output_activation, mode=self.mode)

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return h.hexdigest()


def init_model(layer_dims, seed: int = 0, dtype=np.float64, **metadata) -> MlpModel:
    """Gaussian weights with standard deviation ``1/sqrt(fan_in)``, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 3:
        raise ValueError("need at least one hidden layer: [input, hidden..., output]")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer dimensions must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append((rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpModel(weights, biases, **metadata)


def _sigmoid(z):
    # split form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(getattr(x, "values", x))
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input length {x.shape[-1]} does not match model input {model.input_dim}")
    return x


def _forward_cache(model: MlpModel, x: np.ndarray):
    acts = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        pre.append(z)
        if i < last:
            a = np.maximum(z, 0)
        elif model.output_activation == "sigmoid":
            a = _sigmoid(z)
        else:
            a = z
        acts.append(a)
    return acts, pre


def forward(model: MlpModel, x) -> np.ndarray:
    """Normalised depth prediction for one input vector or a batch of rows."""
    x = _check_input(model, x)
    single = x.ndim == 1
    acts, _ = _forward_cache(model, np.atleast_2d(x).astype(model.weights[0].dtype, copy=False))
    return acts[-1][0] if single else acts[-1]


def loss_mse(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    d = pred - truth
    return float(np.mean(d * d))


@dataclass
class Gradients:
    weights: list
    biases: list


def backward(model: MlpModel, x, truth):
    """Loss and exact gradients of the mean squared error w.r.t. all parameters.

    Returns
    -------
    loss : float
    grads : Gradients
    """
    x = _check_input(model, x)
    x2 = np.atleast_2d(x).astype(model.weights[0].dtype, copy=False)
    y = np.atleast_2d(np.asarray(truth)).astype(x2.dtype, copy=False)
    acts, pre = _forward_cache(model, x2)
    pred = acts[-1]
    if pred.shape != y.shape:
        raise ValueError(f"truth shape {y.shape} does not match output {pred.shape}")
    diff = pred - y
    loss = float(np.mean(diff * diff))
    delta = diff * (2.0 / diff.size)
    if model.output_activation == "sigmoid":
        delta = delta * pred * (1.0 - pred)
    n = len(model.weights)
    gw, gb = [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss, Gradients(gw, gb)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 4e-4
    epochs: int = 300
    batch_size: int = 64
    split_ratio: float = 0.9
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    hidden: tuple[int, ...] = (1024, 1024)
    mode: str = "fusion"
    dtype: str = "float32"

    def __post_init__(self):
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie strictly between 0 and 1")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if self.optimizer not in ("adam", "sgd_momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    test_ssim: list = field(default_factory=list)
    wall_time: float = 0.0
    n_train: int = 0
    n_test: int = 0
    train_index: Optional[np.ndarray] = None
    test_index: Optional[np.ndarray] = None


def split_indices(n: int, split_ratio: float, seed: int):
    """Shuffled train/test index split; ``round(n * split_ratio)`` go to training."""
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * split_ratio))
    return perm[:n_train], perm[n_train:]


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        lr_t = self.lr * math.sqrt(1 - self.b2 ** self.t) / (1 - self.b1 ** self.t)
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            g2 = g * g
            g2 *= 1 - self.b2
            v *= self.b2
            v += g2
            np.sqrt(v, out=g2)
            g2 += self.eps
            np.divide(m, g2, out=g2)
            g2 *= lr_t
            p -= g2


class _Momentum:
    def __init__(self, params, lr, momentum):
        self.lr, self.mu = lr, momentum
        self.vel = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        for p, g, v in zip(params, grads, self.vel):
            v *= self.mu
            v -= self.lr * g
            p += v


def _flat_grads(g: Gradients):
    out = []
    for w, b in zip(g.weights, g.biases):
        out += [w, b]
    return out


def train(dataset, config: TrainConfig = TrainConfig(), log=None):
    """Mini-batch training on a dataset split ``config.split_ratio`` : rest.

    ``dataset`` provides ``fused`` (n, photon_len + radar_len), ``truth``
    (n, width * height) in metres and the shape metadata.  Inputs are masked
    according to ``config.mode`` before training.

    Returns
    -------
    model : MlpModel
        Parameters after the final epoch.
    report : TrainReport
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if n < 10:
        raise ValueError(f"need at least 10 samples, got {n}")
    dtype = np.dtype(config.dtype)
    x_all = apply_mode(np.asarray(dataset.fused, dtype=dtype), dataset.photon_len, config.mode)
    y_all = (np.asarray(dataset.truth, dtype=np.float64) / DEPTH_SCALE).astype(dtype)
    train_idx, test_idx = split_indices(n, config.split_ratio, config.seed)
    if log:
        log(f"split: {train_idx.size} train / {test_idx.size} test")

    dims = [x_all.shape[1], *config.hidden, y_all.shape[1]]
    model = init_model(dims, config.seed, dtype=dtype,
                       photon_len=dataset.photon_len, radar_len=dataset.radar_len,
                       map_width=dataset.width, map_height=dataset.height,
                       depth_scale=DEPTH_SCALE, fov_x=getattr(dataset, "fov_x", float("nan")),
                       fov_y=getattr(dataset, "fov_y", float("nan")), mode=config.mode)
    params = model.parameters()
    opt = (_Adam(params, config.learning_rate) if config.optimizer == "adam"
           else _Momentum(params, config.learning_rate, config.momentum))
    order_rng = np.random.default_rng([config.seed, 1])
    report = TrainReport(n_train=train_idx.size, n_test=test_idx.size,
                         train_index=train_idx, test_index=test_idx)
    x_test, y_test = x_all[test_idx], y_all[test_idx]
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = train_idx[order_rng.permutation(train_idx.size)]
        total = 0.0
        for i in range(0, order.size, config.batch_size):
            batch = order[i:i + config.batch_size]
            loss, grads = backward(model, x_all[batch], y_all[batch])
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            total += loss * batch.size
            opt.step(params, _flat_grads(grads))
        report.train_loss.append(total / order.size)
        if test_idx.size:
            pred = forward(model, x_test)
            report.test_loss.append(loss_mse(pred, y_test))
            report.test_ssim.append(float(np.mean(ssim_rows(pred, y_test))))
        else:
            report.test_loss.append(float("nan"))
            report.test_ssim.append(float("nan"))
        if log and (epoch == 1 or epoch % max(1, config.epochs // 10) == 0):
            log(f"epoch {epoch}: train {report.train_loss[-1]:.6f} "
                f"test {report.test_loss[-1]:.6f} ssim {report.test_ssim[-1]:.4f}")
    report.wall_time = time.perf_counter() - start
    return model, report


def predict(model: MlpModel, fused) -> DepthMap:
    """Depth map in metres for one fused vector."""
    out = forward(model, fused).astype(np.float64)
    w, h = model.map_width, model.map_height
    if w * h != out.size:
        raise ValueError(f"model output {out.size} does not match map {w}x{h}")
    depth = out.reshape(h, w) * model.depth_scale
    return DepthMap(depth, np.zeros_like(depth), model.fov_x, model.fov_y, model.depth_scale)


# Checkpoint layout (little-endian):
#   b"FTMK" | u32 version | u32 n_dims | u32 dims[n_dims]
#   u32 output_activation | u32 mode | u32 photon_len | u32 radar_len | u32 map_width
#   u32 map_height | f64 depth_scale | f64 fov_x | f64 fov_y
#   per layer: f64 weights (fan_in x fan_out, row-major), f64 biases


def model_to_bytes(model: MlpModel) -> bytes:
    dims = model.layer_dims
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(dims)),
             struct.pack(f"<{len(dims)}I", *dims),
             struct.pack("<6I", OUTPUT_ACTIVATIONS.index(model.output_activation),
                         MODES.index(model.mode), model.photon_len, model.radar_len, model.map_width, model.map_height),
             struct.pack("<3d", model.depth_scale, model.fov_x, model.fov_y)]
    for p in model.parameters():
        parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(data: bytes) -> MlpModel:
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic {data[:4]!r}")
    try:
        version, n_dims = struct.unpack_from("<II", data, 4)
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 12
        dims = struct.unpack_from(f"<{n_dims}I", data, off)
        off += 4 * n_dims
        act, mode, photon_len, radar_len, mw, mh = struct.unpack_from("<6I", data, off)
        off += 24
        depth_scale, fov_x, fov_y = struct.unpack_from("<3d", data, off)
        off += 24
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint header: {exc}") from None
    if act >= len(OUTPUT_ACTIVATIONS) or mode >= len(MODES):
        raise CheckpointError("corrupt checkpoint metadata")
    expected = off + 8 * sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if len(data) != expected:
        raise CheckpointError(f"checkpoint is {len(data)} bytes, expected {expected}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(data, "<f8", fan_in * fan_out, off).reshape(fan_in, fan_out)
        off += 8 * w.size
        b = np.frombuffer(data, "<f8", fan_out, off)
        off += 8 * b.size
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpModel(weights, biases, photon_len, radar_len, mw, mh, depth_scale, fov_x, fov_y,
                    OUTPUT_ACTIVATIONS[act], MODES[mode])


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path) -> MlpModel:
    return model_from_bytes(Path(path).read_bytes())
