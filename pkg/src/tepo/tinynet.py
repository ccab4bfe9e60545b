"""Minimal differentiable network stack for the 4-output value network.

float64 end to end: desk-scale tensors make performance a non-issue and
finite-difference gradient checks become sharp. Layers operate on batches
(N, C, H, W) / (N, F); convolution uses an im2col GEMM with an exact col2im
scatter in the backward pass.

Checkpoint format (little-endian): magic ``TEPO``, u32 format version, u32
spec length, the layer-spec text block (utf-8), then every parameter tensor's
float64 bytes in declaration order.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CHECKPOINT_MAGIC = b"TEPO"
CHECKPOINT_VERSION = 1

N_ACTIONS = 4


class CheckpointError(Exception):
    """Unreadable or incompatible checkpoint file."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Conv2d:
    """3x3-style convolution with symmetric zero padding."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 pad: int, rng: np.random.Generator):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.weight = _uniform_fan_in(rng, in_ch * kernel * kernel,
                                      (out_ch, in_ch, kernel, kernel))
        self.bias = np.zeros(out_ch)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._cols: np.ndarray | None = None
        self._x_shape: tuple[int, ...] | None = None

    def spec_line(self) -> str:
        return f"conv {self.in_ch} {self.out_ch} {self.kernel} {self.stride} {self.pad}"

    def out_shape(self, c: int, h: int, w: int) -> tuple[int, int, int]:
        if c != self.in_ch:
            raise ValueError(f"conv expects {self.in_ch} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.pad
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"conv output collapses on {h}x{w} input")
        return self.out_ch, ho, wo

    def _im2col(self, x: np.ndarray) -> tuple[np.ndarray, int, int]:
        n, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        _, ho, wo = self.out_shape(c, h, w)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]  # (n, c, ho, wo, k, k)
        cols = win.transpose(1, 4, 5, 0, 2, 3).reshape(c * k * k, n * ho * wo)
        return np.ascontiguousarray(cols), ho, wo

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        n = x.shape[0]
        cols, ho, wo = self._im2col(x)
        w2d = self.weight.reshape(self.out_ch, -1)
        out = w2d @ cols + self.bias[:, None]
        if train:
            self._cols, self._x_shape = cols, x.shape
        return out.reshape(self.out_ch, n, ho, wo).transpose(1, 0, 2, 3)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        assert self._cols is not None and self._x_shape is not None
        n, c, h, w = self._x_shape
        k, s, p = self.kernel, self.stride, self.pad
        _, _, ho, wo = grad_out.shape
        g2d = grad_out.transpose(1, 0, 2, 3).reshape(self.out_ch, -1)
        self.grad_weight = (g2d @ self._cols.T).reshape(self.weight.shape)
        self.grad_bias = g2d.sum(axis=1)
        dcols = (self.weight.reshape(self.out_ch, -1).T @ g2d)
        dcols = dcols.reshape(c, k, k, n, ho, wo)
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p))
        for ki in range(k):
            for kj in range(k):
                dxp[:, :, ki : ki + s * ho : s, kj : kj + s * wo : s] += \
                    dcols[:, ki, kj].transpose(1, 0, 2, 3)
        self._cols = None
        if p:
            return dxp[:, :, p : p + h, p : p + w]
        return dxp

    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_weight, self.grad_bias]


class ReLU:
    def __init__(self) -> None:
        self._mask: np.ndarray | None = None

    def spec_line(self) -> str:
        return "relu"

    def out_shape(self, *dims: int) -> tuple[int, ...]:
        return dims

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        assert self._mask is not None
        out = grad_out * self._mask
        self._mask = None
        return out

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []


class Flatten:
    def __init__(self) -> None:
        self._shape: tuple[int, ...] | None = None

    def spec_line(self) -> str:
        return "flatten"

    def out_shape(self, *dims: int) -> tuple[int, ...]:
        return (int(np.prod(dims)),)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        assert self._shape is not None
        out = grad_out.reshape(self._shape)
        self._shape = None
        return out

    def params(self) -> list[np.ndarray]:
        return []

    def grads(self) -> list[np.ndarray]:
        return []


class Dense:
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.in_features, self.out_features = in_features, out_features
        self.weight = _uniform_fan_in(rng, in_features, (in_features, out_features))
        self.bias = np.zeros(out_features)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self._x: np.ndarray | None = None

    def spec_line(self) -> str:
        return f"dense {self.in_features} {self.out_features}"

    def out_shape(self, *dims: int) -> tuple[int, ...]:
        if dims != (self.in_features,):
            raise ValueError(f"dense expects {self.in_features} inputs, got {dims}")
        return (self.out_features,)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if train:
            self._x = x
        return x @ self.weight + self.bias

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        assert self._x is not None
        self.grad_weight = self._x.T @ grad_out
        self.grad_bias = grad_out.sum(axis=0)
        self._x = None
        return grad_out @ self.weight.T

    def params(self) -> list[np.ndarray]:
        return [self.weight, self.bias]

    def grads(self) -> list[np.ndarray]:
        return [self.grad_weight, self.grad_bias]


Layer = Conv2d | ReLU | Flatten | Dense


def default_spec(in_channels: int = 5, height: int = 64, width: int = 64) -> str:
    """Three strided conv blocks feeding a small dense head."""
    c2_h, c2_w = (height + 1) // 2, (width + 1) // 2
    c3_h, c3_w = (c2_h + 1) // 2, (c2_w + 1) // 2
    flat = 16 * c3_h * c3_w
    return "\n".join(
        [
            f"input {in_channels} {height} {width}",
            f"conv {in_channels} 8 3 1 1",
            "relu",
            "conv 8 16 3 2 1",
            "relu",
            "conv 16 16 3 2 1",
            "relu",
            "flatten",
            f"dense {flat} 64",
            "relu",
            f"dense 64 {N_ACTIONS}",
        ]
    )


class QNet:
    """Value network: (C, H, W) features -> one value per prompt form."""

    def __init__(self, spec_text: str, seed: int | np.random.SeedSequence = 0):
        self.spec_text = spec_text.strip()
        rng = np.random.default_rng(seed)
        lines = [ln.strip() for ln in self.spec_text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("input "):
            raise CheckpointError("layer spec must start with an input line")
        try:
            _, c, h, w = lines[0].split()
            dims: tuple[int, ...] = (int(c), int(h), int(w))
        except ValueError as exc:
            raise CheckpointError(f"bad input line {lines[0]!r}") from exc
        self.input_shape = dims
        self.layers: list[Layer] = []
        for line in lines[1:]:
            parts = line.split()
            try:
                if parts[0] == "conv":
                    ci, co, k, s, p = map(int, parts[1:])
                    layer: Layer = Conv2d(ci, co, k, s, p, rng)
                elif parts[0] == "relu":
                    layer = ReLU()
                elif parts[0] == "flatten":
                    layer = Flatten()
                elif parts[0] == "dense":
                    fi, fo = map(int, parts[1:])
                    layer = Dense(fi, fo, rng)
                else:
                    raise CheckpointError(f"unknown layer {parts[0]!r}")
            except (ValueError, IndexError) as exc:
                raise CheckpointError(f"bad layer line {line!r}") from exc
            try:
                dims = tuple(layer.out_shape(*dims))
            except ValueError as exc:
                raise CheckpointError(str(exc)) from exc
            self.layers.append(layer)
        if dims != (N_ACTIONS,):
            raise CheckpointError(
                f"network must end with {N_ACTIONS} outputs, spec ends with {dims}"
            )

    @classmethod
    def default(cls, in_channels: int = 5, height: int = 64, width: int = 64,
                seed: int | np.random.SeedSequence = 0) -> "QNet":
        return cls(default_spec(in_channels, height, width), seed)

    def forward_batch(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"expected input {self.input_shape}, got {x.shape[1:]}")
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out = layer.forward(out, train=train)
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape != self.input_shape:
            raise ValueError(f"expected input {self.input_shape}, got {x.shape}")
        return self.forward_batch(x[None])[0]

    def backward_batch(self, grad_out: np.ndarray) -> np.ndarray:
        g = grad_out
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for layer in self.layers for g in layer.grads()]

    def set_params(self, values: Iterable[np.ndarray]) -> None:
        for p, v in zip(self.params(), values, strict=True):
            np.copyto(p, v)

    def clone(self) -> "QNet":
        other = QNet(self.spec_text, seed=0)
        other.set_params(self.params())
        return other


class Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, net: QNet, learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params()]
        self.v = [np.zeros_like(p) for p in net.params()]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v, strict=True):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def backward_and_step(net: QNet, x: np.ndarray, actions: np.ndarray,
                      targets: np.ndarray, opt: Adam) -> float:
    """One squared-Bellman-error minibatch update; returns the loss.

    Only the selected action's output contributes per sample.
    """
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    q = net.forward_batch(x, train=True)
    idx = np.arange(n)
    diff = q[idx, actions] - targets
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}")
    grad_q = np.zeros_like(q)
    grad_q[idx, actions] = 2.0 * diff / n
    net.backward_batch(grad_q)
    opt.step(net.params(), net.grads())
    return loss


def save_net(net: QNet, path: str | Path) -> None:
    spec = net.spec_text.encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(spec))
    blob += spec
    for p in net.params():
        blob += np.ascontiguousarray(p, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_net(path: str | Path) -> QNet:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, spec_len = struct.unpack_from("<II", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    if len(raw) < 12 + spec_len:
        raise CheckpointError(f"{path}: truncated layer spec")
    spec = raw[12 : 12 + spec_len].decode("utf-8", errors="strict")
    net = QNet(spec, seed=0)
    payload = raw[12 + spec_len :]
    expected = sum(p.size for p in net.params()) * 8
    if len(payload) != expected:
        raise CheckpointError(
            f"{path}: parameter payload is {len(payload)} bytes, spec needs {expected}"
        )
    offset = 0
    for p in net.params():
        nbytes = p.size * 8
        values = np.frombuffer(payload, dtype="<f8", count=p.size, offset=offset)
        np.copyto(p, values.reshape(p.shape))
        offset += nbytes
    return net
