"""KANLinear: a learnable spline on every input->output edge, summed per output.

For input ``x`` of shape ``[batch, n_in]``::

    y[b, j] = sum_i  w_b[j, i] * silu(x[b, i])
                   + w_s[j, i] * sum_m coeffs[j, i, m] * B_m^(i)(x[b, i])

``B^(i)`` is the B-spline basis on input column ``i``'s knot grid.  Each
column owns one grid shared by all ``n_out`` edges leaving it, which is what
:func:`kan_update_grids` adapts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bspline import (
    DEFAULT_BLEND,
    PRESERVE_TOL,
    KnotGrid,
    adapt_grid,
    bspline_basis,
    make_uniform_grid,
)
from .nn import Layer, silu
from .tensor import ShapeError, Tensor, add, as_tensor, einsum, forward_record, matmul, mul, reshape, transpose


@dataclass
class KanConfig:
    grid_size: int = 5
    degree: int = 3
    grid_range: tuple[float, float] = (-1.0, 1.0)
    base_term: bool = True

    def grid(self) -> KnotGrid:
        return make_uniform_grid(self.grid_range[0], self.grid_range[1], self.grid_size, self.degree)


def spline_basis(x: Tensor, knots: np.ndarray, degree: int, lo: float, hi: float) -> Tensor:
    """Tape-recorded basis values ``[batch, n_in, n_basis]``; differentiable in ``x``."""
    if x.ndim != 2 or knots.ndim != 2 or knots.shape[0] != x.shape[1]:
        raise ShapeError("spline_basis", f"input {x.shape} incompatible with knots {knots.shape}")
    B, dB = bspline_basis(x.data, knots, degree, lo, hi, derivative=True)
    return forward_record("spline_basis", (x,), B, lambda g: ((g * dB).sum(axis=-1),))


class KANLinear(Layer):
    kind = "kan"

    def __init__(
        self,
        n_in: int,
        n_out: int,
        grid: KnotGrid,
        base_weight: np.ndarray,
        spline_coeffs: np.ndarray,
        spline_scaler: np.ndarray,
        base_term: bool = True,
    ):
        if n_in < 1 or n_out < 1:
            raise ValueError(f"KANLinear sizes must be positive, got {n_in}->{n_out}")
        self.n_in, self.n_out = n_in, n_out
        self.degree, self.intervals = grid.degree, grid.intervals
        self.lo, self.hi = grid.lo, grid.hi
        self.knots = np.tile(grid.knots, (n_in, 1))
        self.base_term = base_term
        nb = grid.n_basis
        self.base_weight = Tensor(base_weight if base_term else np.zeros((n_out, n_in)), base_term, "base_weight")
        self.spline_coeffs = Tensor(spline_coeffs, True, "spline_coeffs")
        self.spline_scaler = Tensor(spline_scaler, True, "spline_scaler")
        for t, shape in (
            (self.base_weight, (n_out, n_in)),
            (self.spline_coeffs, (n_out, n_in, nb)),
            (self.spline_scaler, (n_out, n_in)),
        ):
            if t.shape != shape:
                raise ShapeError("KANLinear", f"{t.name} has shape {t.shape}, expected {shape}")

    @property
    def n_basis(self) -> int:
        return self.intervals + self.degree

    def grid(self, column: int) -> KnotGrid:
        return KnotGrid(self.degree, self.intervals, self.lo, self.hi, self.knots[column])

    def __call__(self, x: Tensor) -> Tensor:
        return kan_forward(self, x)

    def parameters(self):
        return [
            ("spline_coeffs", self.spline_coeffs),
            ("spline_scaler", self.spline_scaler),
            ("base_weight", self.base_weight),
        ]

    def buffers(self):
        return [("knots", self.knots)]

    def __repr__(self):
        return f"KANLinear({self.n_in}->{self.n_out}, G={self.intervals}, k={self.degree})"


def kan_init(
    n_in: int,
    n_out: int,
    grid: KnotGrid | None = None,
    seed: int | np.random.Generator = 0,
    base_term: bool = True,
) -> KANLinear:
    """Base weights ~ U(+-sqrt(6/n_in)), coefficients ~ N(0, 0.1/sqrt(G+k)), scalers 1."""
    grid = grid if grid is not None else make_uniform_grid()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    nb = grid.n_basis
    bound = np.sqrt(6.0 / n_in)
    base = rng.uniform(-bound, bound, size=(n_out, n_in))
    coeffs = rng.normal(0.0, 0.1 / np.sqrt(nb), size=(n_out, n_in, nb))
    return KANLinear(n_in, n_out, grid, base, coeffs, np.ones((n_out, n_in)), base_term=base_term)


def kan_forward(layer: KANLinear, x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != layer.n_in:
        raise ShapeError("kan_forward", f"expected input [batch, {layer.n_in}], got {x.shape}")
    basis = spline_basis(x, layer.knots, layer.degree, layer.lo, layer.hi)
    scaled = mul(layer.spline_coeffs, reshape(layer.spline_scaler, (layer.n_out, layer.n_in, 1)))
    y = einsum("bim,jim->bj", basis, scaled)
    if layer.base_term:
        y = add(matmul(silu(x), transpose(layer.base_weight)), y)
    return y


def kan_update_grids(
    layer: KANLinear,
    batch,
    blend: float = DEFAULT_BLEND,
    tol: float | None = PRESERVE_TOL,
) -> KANLinear:
    """Adapt each input column's grid to ``batch`` and refit that column's edges.

    With ``tol`` set, each column gets a share of the budget scaled by its
    largest spline scaler, so the layer output on ``batch`` moves by less
    than ``tol`` in total.  Mutates and returns ``layer``.
    """
    data = batch.data if isinstance(batch, Tensor) else np.asarray(batch, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != layer.n_in:
        raise ShapeError("kan_update_grids", f"expected batch [n, {layer.n_in}], got {data.shape}")
    if data.shape[0] == 0:
        raise ValueError("kan_update_grids needs a non-empty batch")
    coeffs = layer.spline_coeffs.data
    scaler = np.abs(layer.spline_scaler.data)
    for i in range(layer.n_in):
        col_scale = scaler[:, i].max()
        col_tol = None if tol is None or col_scale == 0 else tol / (layer.n_in * col_scale)
        new_grid, new_c = adapt_grid(layer.grid(i), coeffs[:, i, :].T, data[:, i], blend, col_tol)
        layer.knots[i] = new_grid.knots
        coeffs[:, i, :] = new_c.T
    return layer
