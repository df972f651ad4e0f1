"""Knot grids and B-spline bases (Cox-de Boor), least-squares fits, grid adaptation.

A grid of ``G`` intervals and degree ``k`` on ``[lo, hi]`` carries
``G + 2k + 1`` knots: the ``G + 1`` breakpoints plus ``k`` extension knots
on each side, so that all ``G + k`` basis functions sum to one everywhere
on ``[lo, hi]``.  Inputs outside ``[lo, hi]`` are clamped, which makes the
derivative with respect to ``x`` zero there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RIDGE = 1e-8
DEFAULT_BLEND = 0.02
MIN_SPACING = 1e-6
PRESERVE_TOL = 1e-3
MAX_BACKOFF = 12


class SingularSystemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class KnotGrid:
    degree: int
    intervals: int
    lo: float
    hi: float
    knots: np.ndarray

    @property
    def n_basis(self) -> int:
        return self.intervals + self.degree

    def __post_init__(self):
        if self.knots.shape != (self.intervals + 2 * self.degree + 1,):
            raise ValueError(
                f"expected {self.intervals + 2 * self.degree + 1} knots, got shape {self.knots.shape}"
            )


def _uniform_positions(lo: float, hi: float, G: int, k: int) -> np.ndarray:
    # lo*(1-s) + hi*s hits lo and hi exactly at s=0 and s=1
    s = np.arange(-k, G + k + 1, dtype=np.float64) / G
    return lo * (1.0 - s) + hi * s


def make_uniform_grid(lo: float = -1.0, hi: float = 1.0, G: int = 5, k: int = 3) -> KnotGrid:
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError(f"invalid grid range: lo={lo} must be < hi={hi}")
    if G < 1:
        raise ValueError(f"invalid grid size G={G}, need G >= 1")
    if k < 0:
        raise ValueError(f"invalid degree k={k}, need k >= 0")
    return KnotGrid(k, G, lo, hi, _uniform_positions(lo, hi, G, k))


def _safe_ratio(num, den):
    ok = den != 0
    return np.where(ok, num / np.where(ok, den, 1.0), 0.0)


def bspline_basis(x, knots, degree: int, lo: float, hi: float, derivative: bool = False):
    """Evaluate all basis functions (and optionally d/dx) at ``x``.

    ``x`` has shape ``S``; ``knots`` must broadcast against ``S + (n_knots,)``
    (one shared knot vector, or one per trailing column of ``x``).  Returns an
    array of shape ``S + (n_basis,)``, or a pair of them with ``derivative``.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(knots, dtype=np.float64)
    xc = np.clip(x, lo, hi)[..., None]

    B = ((xc >= t[..., :-1]) & (xc < t[..., 1:])).astype(np.float64)
    if degree == 0:
        # right end of the last interval is closed
        B[..., -1] = np.where(xc[..., 0] == t[..., -1], 1.0, B[..., -1])
    prev = B
    for d in range(1, degree + 1):
        prev = B
        left = _safe_ratio(xc - t[..., : -(d + 1)], t[..., d:-1] - t[..., : -(d + 1)])
        right = _safe_ratio(t[..., d + 1 :] - xc, t[..., d + 1 :] - t[..., 1:-d])
        B = left * B[..., :-1] + right * B[..., 1:]

    if not derivative:
        return B
    if degree == 0:
        return B, np.zeros_like(B)
    k = degree
    a = _safe_ratio(k, t[..., k:-1] - t[..., : -(k + 1)])
    b = _safe_ratio(k, t[..., k + 1 :] - t[..., 1:-k])
    dB = a * prev[..., :-1] - b * prev[..., 1:]
    inside = ((x >= lo) & (x <= hi))[..., None]
    return B, np.where(inside, dB, 0.0)


def basis_eval(grid: KnotGrid, x) -> np.ndarray:
    return bspline_basis(x, grid.knots, grid.degree, grid.lo, grid.hi)


def basis_derivative(grid: KnotGrid, x) -> np.ndarray:
    return bspline_basis(x, grid.knots, grid.degree, grid.lo, grid.hi, derivative=True)[1]


def spline_eval(grid: KnotGrid, coeffs, x):
    """Sum of ``coeffs[m] * B_m(x)``.  ``coeffs`` may carry trailing columns."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape[:1] != (grid.n_basis,):
        raise ValueError(f"coefficient length {coeffs.shape[:1]} does not match basis count {grid.n_basis}")
    B = basis_eval(grid, x)
    return np.tensordot(B, coeffs, axes=([-1], [0]))


def fit_least_squares(grid: KnotGrid, xs, ys, ridge: float = RIDGE) -> np.ndarray:
    """Ridge-damped normal-equation fit of spline coefficients to ``(xs, ys)``.

    ``ys`` may be 2-D (one column per function sharing the grid); the result
    then has shape ``(n_basis, n_columns)``.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(-1)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.shape[0] != xs.shape[0]:
        raise ValueError(f"xs has {xs.shape[0]} samples but ys has {ys.shape[0]}")
    A = basis_eval(grid, xs)
    normal = A.T @ A + ridge * np.eye(grid.n_basis)
    rhs = A.T @ ys
    try:
        coeffs = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"damped normal matrix is singular: {exc}") from None
    if not np.all(np.isfinite(coeffs)):
        raise SingularSystemError("least-squares solve produced non-finite coefficients")
    return coeffs


def _spread_increasing(interior: np.ndarray, lo: float, hi: float, gap: float) -> np.ndarray:
    """Make ``lo < interior[0] < ... < hi`` with neighbours at least ``gap`` apart.

    Runs of (near-)equal values are spread symmetrically about their value
    before a forward and a backward sweep push out any remaining violations.
    """
    pts = np.sort(interior)
    n = pts.size
    i = 0
    while i < n:
        j = i
        while j + 1 < n and pts[j + 1] - pts[i] < gap * (j + 1 - i):
            j += 1
        if j > i:
            centre = pts[i : j + 1].mean()
            pts[i : j + 1] = centre + (np.arange(j - i + 1) - (j - i) / 2.0) * gap
        i = j + 1
    full = np.concatenate([[lo], pts, [hi]])
    for m in range(1, n + 1):
        full[m] = max(full[m], full[m - 1] + gap)
    for m in range(n, 0, -1):
        full[m] = min(full[m], full[m + 1] - gap)
    return full[1:-1]


def adapted_knots(grid: KnotGrid, samples, blend: float = DEFAULT_BLEND) -> KnotGrid:
    """Grid whose breakpoints blend uniform and empirical-quantile positions.

    The range ``[lo, hi]`` and the extension knots stay as in a uniform
    grid; only the ``G - 1`` interior breakpoints move.
    """
    samples = np.clip(np.asarray(samples, dtype=np.float64).reshape(-1), grid.lo, grid.hi)
    if samples.size == 0:
        raise ValueError("adapt_grid needs at least one sample")
    if not 0.0 <= blend <= 1.0:
        raise ValueError(f"blend must lie in [0, 1], got {blend}")
    G, k = grid.intervals, grid.degree
    uniform = _uniform_positions(grid.lo, grid.hi, G, k)
    knots = uniform.copy()
    if G > 1:
        levels = np.arange(1, G) / G
        quant = np.quantile(samples, levels)
        interior = blend * uniform[k + 1 : k + G] + (1.0 - blend) * quant
        gap = MIN_SPACING * (grid.hi - grid.lo)
        if np.any(np.diff(np.concatenate([[grid.lo], interior, [grid.hi]])) < gap):
            interior = _spread_increasing(interior, grid.lo, grid.hi, gap)
        knots[k + 1 : k + G] = interior
    return KnotGrid(k, G, grid.lo, grid.hi, knots)


def adapt_grid(
    grid: KnotGrid,
    coeffs,
    samples,
    blend: float = DEFAULT_BLEND,
    tol: float | None = PRESERVE_TOL,
):
    """Move knots toward the sample distribution and refit to keep the function.

    The target knots come from :func:`adapted_knots`.  Coefficients are refit
    by least squares on ``samples``.  When ``tol`` is set and the refit spline
    deviates from the old one by ``tol`` or more on some sample, the move is
    halved along the straight path from the old knots to the target (each
    point on it is a valid increasing knot vector) until the deviation drops
    below ``tol``; after ``MAX_BACKOFF`` halvings the old grid is kept.

    Returns ``(new_grid, new_coeffs)``.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    target = adapted_knots(grid, samples, blend)
    xs = np.clip(np.asarray(samples, dtype=np.float64).reshape(-1), grid.lo, grid.hi)
    old = spline_eval(grid, coeffs, xs)
    step = 1.0
    for _ in range(MAX_BACKOFF + 1):
        knots = target.knots if step == 1.0 else (1.0 - step) * grid.knots + step * target.knots
        cand = KnotGrid(grid.degree, grid.intervals, grid.lo, grid.hi, knots)
        new_coeffs = fit_least_squares(cand, xs, old)
        if tol is None or np.max(np.abs(spline_eval(cand, new_coeffs, xs) - old)) < tol:
            return cand, new_coeffs
        step *= 0.5
    return KnotGrid(grid.degree, grid.intervals, grid.lo, grid.hi, grid.knots.copy()), coeffs.copy()
