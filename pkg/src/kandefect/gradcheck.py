"""Central finite-difference checks for every differentiable primitive.

Each check draws random small operands, projects the op's output onto a
fixed random tensor to get a scalar, and compares the taped gradient with
``(f(x + h) - f(x - h)) / 2h`` for every coordinate of every operand.  The
error of one draw is ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
Ops with kinks (ReLU, max-pool) draw operands at least ``KINK_GAP`` away from them.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import nn
from .bspline import make_uniform_grid
from .kan import kan_forward, kan_init, spline_basis
from .tensor import Tape, Tensor, add, einsum, matmul, mul, sub

STEP = 1e-5
KINK_GAP = 1e-3
TOLERANCE = 1e-4


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(fn: Callable[..., Tensor], inputs: list[Tensor], rng: np.random.Generator, h: float = STEP) -> float:
    """Worst relative error between taped and finite-difference gradients of ``fn(*inputs)``."""
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    probe = fn(*inputs)
    proj = rng.normal(size=probe.shape)

    def objective() -> float:
        return float(np.sum(fn(*inputs).data * proj))

    with Tape() as tape:
        out = fn(*inputs)
        loss = (out * Tensor(proj)).sum()
    grads = tape.backward(loss)

    worst = 0.0
    for t in inputs:
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = objective()
            flat[i] = orig - h
            down = objective()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        worst = max(worst, relative_error(grads[t], numeric))
    return worst


def _away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    x = np.where(np.abs(x) < KINK_GAP, np.sign(x + 1e-300) * (KINK_GAP + np.abs(x)), x)
    return x


def _distinct_windows(rng, shape):
    # every value distinct and at least KINK_GAP apart, so each 2x2 max is unique
    n = int(np.prod(shape))
    vals = (rng.permutation(n) + rng.uniform(0.1, 0.9, n)) * 10 * KINK_GAP
    return vals.reshape(shape)


def _kan_case(rng):
    layer = kan_init(3, 2, make_uniform_grid(), seed=int(rng.integers(1 << 31)))
    layer.spline_coeffs.data[...] = rng.normal(size=layer.spline_coeffs.shape)
    layer.spline_scaler.data[...] = rng.normal(size=layer.spline_scaler.shape)
    x = Tensor(rng.uniform(-1 + KINK_GAP, 1 - KINK_GAP, size=(4, 3)))

    def apply(x, *params):
        return kan_forward(layer, x)

    return [x, layer.spline_coeffs, layer.spline_scaler, layer.base_weight], apply


def _bspline_case(rng):
    grid = make_uniform_grid(-1.0, 1.0, 5, 3)
    knots = np.tile(grid.knots, (3, 1))
    x = Tensor(rng.uniform(-1 + KINK_GAP, 1 - KINK_GAP, size=(4, 3)))
    return [x], lambda x: spline_basis(x, knots, grid.degree, grid.lo, grid.hi)


def _sce_case(rng):
    labels = rng.integers(0, 5, size=4)
    return [Tensor(2 * rng.normal(size=(4, 5)))], lambda z: nn.softmax_cross_entropy(z, labels)


def _normals(*shapes, fn, factor=1.0):
    return lambda rng: ([Tensor(factor * rng.normal(size=s)) for s in shapes], fn)


# name -> rng -> (operands, fn)
CASES = {
    "add": _normals((3, 4), (1, 4), fn=add),
    "sub": _normals((3, 4), (3, 4), fn=sub),
    "mul": _normals((3, 4), (3, 1), fn=mul),
    "matmul": _normals((3, 4), (4, 2), fn=matmul),
    "einsum": _normals((2, 3, 4), (5, 3, 4), fn=lambda a, b: einsum("bim,jim->bj", a, b)),
    "silu": _normals((4, 5), fn=nn.silu, factor=3.0),
    "relu": lambda rng: ([Tensor(_away_from_zero(rng, (4, 5)))], nn.relu),
    "conv2d": _normals((1, 2, 4, 4), (2, 2, 3, 3), (2,), fn=nn.conv2d),
    "maxpool2": lambda rng: ([Tensor(_distinct_windows(rng, (1, 2, 4, 4)))], nn.maxpool2),
    "linear": _normals((3, 4), (2, 4), (2,), fn=nn.linear),
    "softmax_cross_entropy": _sce_case,
    "bspline_basis": _bspline_case,
    "kan_linear": _kan_case,
}

PRIMITIVES = tuple(CASES)


def run_suite(trials: int = 100, seed: int = 0, ops=None) -> dict[str, float]:
    """Max relative error per primitive over ``trials`` random draws."""
    rng = np.random.default_rng(seed)
    results = {}
    for name in ops or CASES:
        worst = 0.0
        for _ in range(trials):
            operands, fn = CASES[name](rng)
            worst = max(worst, check_gradients(fn, operands, rng))
        results[name] = worst
    return results
