"""Convolutional Q-network in plain numpy.

Layout: observations are ``(B, H, W, C)``; the conv kernel is
``(k, k, C, F)``; dense weights are ``(fan_in, fan_out)``.  Topology:
conv (valid padding) -> ReLU -> flatten -> fc1 -> ReLU -> fc2 -> ReLU -> out.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYERS = ("conv_w", "conv_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b", "out_w", "out_b")


class DivergenceError(FloatingPointError):
    """Raised when the training loss stops being finite."""


@dataclass
class NetworkParams:
    conv_w: np.ndarray
    conv_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    out_w: np.ndarray
    out_b: np.ndarray
    stride: int = 2

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LAYERS}

    def copy(self) -> "NetworkParams":
        return NetworkParams(**{k: v.copy() for k, v in self.arrays().items()},
                             stride=self.stride)

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(**{k: v.astype(dtype) for k, v in self.arrays().items()},
                             stride=self.stride)

    @property
    def channels(self) -> int:
        return self.conv_w.shape[2]

    @property
    def kernel(self) -> int:
        return self.conv_w.shape[0]

    @property
    def conv_out(self) -> int:
        side = int(round((self.fc1_w.shape[0] / self.conv_w.shape[3]) ** 0.5))
        return side

    @property
    def input_size(self) -> int:
        return (self.conv_out - 1) * self.stride + self.kernel

    @property
    def n_actions(self) -> int:
        return self.out_w.shape[1]


def conv_output_size(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def init_params(channels: int, rng: np.random.Generator, *, obs_size: int = 64,
                filters: int = 16, kernel: int = 8, stride: int = 2,
                hidden: tuple[int, int] = (1024, 1024), n_actions: int = 12,
                dtype=np.float32) -> NetworkParams:
    """He-uniform init for ReLU layers, +-1/sqrt(fan_in) for the output layer."""
    out = conv_output_size(obs_size, kernel, stride)
    if out < 1:
        raise ValueError("kernel larger than observation")
    flat = out * out * filters

    def he(shape, fan_in):
        lim = np.sqrt(6.0 / fan_in)
        return rng.uniform(-lim, lim, shape).astype(dtype)

    lim_out = 1.0 / np.sqrt(hidden[1])
    return NetworkParams(
        conv_w=he((kernel, kernel, channels, filters), kernel * kernel * channels),
        conv_b=np.zeros(filters, dtype),
        fc1_w=he((flat, hidden[0]), flat),
        fc1_b=np.zeros(hidden[0], dtype),
        fc2_w=he((hidden[0], hidden[1]), hidden[0]),
        fc2_b=np.zeros(hidden[1], dtype),
        out_w=rng.uniform(-lim_out, lim_out, (hidden[1], n_actions)).astype(dtype),
        out_b=np.zeros(n_actions, dtype),
        stride=stride,
    )


def _im2col(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(B, H, W, C) -> (B, O, O, k*k*C) patches matching the kernel layout."""
    win = sliding_window_view(x, (kernel, kernel), axis=(1, 2))[:, ::stride, ::stride]
    # win: (B, O, O, C, k, k) -> (B, O, O, k, k, C)
    b, o1, o2 = win.shape[:3]
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(b, o1, o2, -1)


def _as_batch(params: NetworkParams, obs: np.ndarray) -> np.ndarray:
    x = np.asarray(obs)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != params.channels:
        raise ValueError(f"observation shape {np.shape(obs)} does not match "
                         f"{params.channels}-channel network")
    if x.shape[1] != params.input_size or x.shape[2] != params.input_size:
        raise ValueError(f"network expects {params.input_size}x{params.input_size} input")
    return x.astype(params.fc1_w.dtype, copy=False)


def _dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # OpenBLAS gemm packs the whole weight matrix; for a handful of rows,
    # per-row gemv is several times faster
    if 1 < len(x) <= 8:
        return np.stack([row @ w for row in x]) + b
    return x @ w + b


def _forward(params: NetworkParams, x: np.ndarray):
    k = params.kernel
    cols = _im2col(x, k, params.stride)
    b, o = cols.shape[0], cols.shape[1]
    cols2 = cols.reshape(b * o * o, -1)
    zc = cols2 @ params.conv_w.reshape(-1, params.conv_w.shape[3]) + params.conv_b
    hc = np.maximum(zc, 0)
    flat = hc.reshape(b, -1)
    z1 = _dense(flat, params.fc1_w, params.fc1_b)
    h1 = np.maximum(z1, 0)
    z2 = _dense(h1, params.fc2_w, params.fc2_b)
    h2 = np.maximum(z2, 0)
    q = h2 @ params.out_w + params.out_b
    return q, (cols2, zc, flat, z1, h1, z2, h2)


def forward(params: NetworkParams, obs: np.ndarray) -> np.ndarray:
    """Q-values: ``(12,)`` for a single observation, ``(B, 12)`` for a batch."""
    single = np.ndim(obs) == 3
    q, _ = _forward(params, _as_batch(params, obs))
    return q[0] if single else q


def loss_and_grads(params: NetworkParams, obs: np.ndarray, actions: np.ndarray,
                   targets: np.ndarray):
    """Mean squared TD error on the taken actions and its parameter gradients.

    ``targets`` are treated as constants.
    """
    x = _as_batch(params, obs)
    q, (cols2, zc, flat, z1, h1, z2, h2) = _forward(params, x)
    b = q.shape[0]
    rows = np.arange(b)
    err = q[rows, actions] - targets.astype(q.dtype)
    loss = float(np.mean(err.astype(np.float64) ** 2))

    dq = np.zeros_like(q)
    dq[rows, actions] = (2.0 / b) * err
    g = {}
    g["out_w"] = h2.T @ dq
    g["out_b"] = dq.sum(0)
    dz2 = (dq @ params.out_w.T) * (z2 > 0)
    g["fc2_w"] = h1.T @ dz2
    g["fc2_b"] = dz2.sum(0)
    dz1 = (dz2 @ params.fc2_w.T) * (z1 > 0)
    g["fc1_w"] = flat.T @ dz1
    g["fc1_b"] = dz1.sum(0)
    dzc = (dz1 @ params.fc1_w.T).reshape(zc.shape) * (zc > 0)
    g["conv_w"] = (cols2.T @ dzc).reshape(params.conv_w.shape)
    g["conv_b"] = dzc.sum(0)
    return loss, g


@numba.njit(cache=True)
def _adam_kernel(p, g, m, v, b1, b2, lr_t, eps):
    # flat views; one fused pass keeps this memory-bound step cheap
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr_t * mi / (np.sqrt(vi) + eps)


@numba.njit(cache=True)
def _blend_kernel(t, o, alpha):
    for i in range(t.size):
        t[i] = (1.0 - alpha) * t[i] + alpha * o[i]


class Adam:
    """Adam with bias correction; state keyed by layer name."""

    def __init__(self, params: NetworkParams, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}

    def step(self, params: NetworkParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name in LAYERS:
            p = getattr(params, name)
            g = np.ascontiguousarray(grads[name], dtype=p.dtype)
            _adam_kernel(p.reshape(-1), g.reshape(-1), self.m[name].reshape(-1),
                         self.v[name].reshape(-1), p.dtype.type(b1), p.dtype.type(b2),
                         p.dtype.type(lr_t), p.dtype.type(self.eps))


def soft_update(target: NetworkParams, online: NetworkParams, alpha: float) -> NetworkParams:
    """In place: ``target <- (1 - alpha) * target + alpha * online``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    for name in LAYERS:
        t = getattr(target, name)
        o = getattr(online, name)
        if alpha == 1.0:
            t[...] = o
        else:
            _blend_kernel(t.reshape(-1), np.ascontiguousarray(o, dtype=t.dtype).reshape(-1),
                          t.dtype.type(alpha))
    return target


# ---------------------------------------------------------------------------
# weight files

_MAGIC = b"DQNW"


def save_weights(params: NetworkParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", _MAGIC, 1, params.channels))
        for name in LAYERS:
            a = np.ascontiguousarray(getattr(params, name), dtype="<f4")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(a.tobytes(order="C"))


def load_weights(path, stride: int = 2) -> NetworkParams:
    data = Path(path).read_bytes()
    magic, version, channels = struct.unpack_from("<4sII", data, 0)
    if magic != _MAGIC:
        raise ValueError("not a DQNW weight file")
    if version != 1:
        raise ValueError(f"unsupported weight file version {version}")
    off = 12
    arrays = {}
    for name in LAYERS:
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", data, off)
        off += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arrays[name] = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(dims).astype(np.float32)
        off += 4 * n
    if off != len(data):
        raise ValueError("trailing bytes in weight file")
    params = NetworkParams(**arrays, stride=stride)
    if params.channels != channels:
        raise ValueError("channel count in header does not match conv weights")
    return params
