"""Conventional layers: 3x3 convolution, 2x2 max-pooling, ReLU/SiLU, dense, loss.

Convolutions are cross-correlations with stride 1 and zero padding 1, so the
spatial size is preserved; pooling halves it and needs even sizes.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, forward_record, reshape

KERNEL = 3
PAD = 1


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return forward_record("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def silu_array(z: np.ndarray) -> np.ndarray:
    return z * _sigmoid(z)


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)

    def backward(g):
        return (g * (s * (1.0 + x.data * (1.0 - s))),)

    return forward_record("silu", (x,), x.data * s, backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d", f"expected 4-D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    O, Cw, kh, kw = weight.shape
    if Cw != C:
        raise ShapeError("conv2d", f"input has {C} channels but weight expects {Cw}")
    if (kh, kw) != (KERNEL, KERNEL):
        raise ShapeError("conv2d", f"kernel must be {KERNEL}x{KERNEL}, got {kh}x{kw}")
    if bias.shape != (O,):
        raise ShapeError("conv2d", f"bias shape {bias.shape} != ({O},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    win = sliding_window_view(xp, (KERNEL, KERNEL), axis=(2, 3))  # B,C,H,W,3,3
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + bias.data[None, :, None, None]

    def backward(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = np.zeros_like(xp)
            for i in range(KERNEL):
                for j in range(KERNEL):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                    gxp[:, :, i : i + H, j : j + W] += contrib.transpose(0, 3, 1, 2)
            gx = gxp[:, :, PAD : PAD + H, PAD : PAD + W]
        return gx, gw, gb

    return forward_record("conv2d", (x, weight, bias), out, backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max-pool, stride 2.  Ties go to the first element in row-major window order."""
    if x.ndim != 4:
        raise ShapeError("maxpool2", f"expected 4-D input, got {x.shape}")
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise ShapeError("maxpool2", f"spatial size {H}x{W} is not even")
    win = x.data.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gwin = np.zeros_like(win)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return (gx,)

    return forward_record("maxpool2", (x,), out, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError("linear", f"input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError("linear", f"bias shape {bias.shape} != ({weight.shape[0]},)")

    def backward(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return forward_record("linear", (x, weight, bias), x.data @ weight.data.T + bias.data, backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("softmax_cross_entropy", f"logits {logits.shape} vs labels {labels.shape}")
    n, C = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {C}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = np.mean(logsum - z[rows, labels])

    def backward(g):
        p = softmax(logits.data)
        p[rows, labels] -= 1.0
        return (p * (float(g) / n),)

    return forward_record("softmax_cross_entropy", (logits,), np.asarray(loss), backward)


class Layer:
    kind = "layer"

    def parameters(self) -> list[tuple[str, Tensor]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def param_count(self) -> int:
        return sum(t.size for _, t in self.parameters() if t.requires_grad)

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = c_in * KERNEL * KERNEL
        self.c_in, self.c_out = c_in, c_out
        self.weight = Tensor(_uniform(rng, np.sqrt(6.0 / fan_in), (c_out, c_in, KERNEL, KERNEL)), True, "weight")
        self.bias = Tensor(np.zeros(c_out), True, "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __repr__(self):
        return f"Conv2d({self.c_in}->{self.c_out})"


class Linear(Layer):
    kind = "linear"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        self.weight = Tensor(_uniform(rng, np.sqrt(1.0 / n_in), (n_out, n_in)), True, "weight")
        self.bias = Tensor(np.zeros(n_out), True, "bias")

    def __call__(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)

    def parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def __repr__(self):
        return f"Linear({self.n_in}->{self.n_out})"


class ReLU(Layer):
    kind = "relu"

    def __call__(self, x):
        return relu(x)


class MaxPool2(Layer):
    kind = "pool"

    def __call__(self, x):
        return maxpool2(x)


class Flatten(Layer):
    kind = "flatten"

    def __call__(self, x):
        return reshape(x, (x.shape[0], -1))
