"""Slow, loop-based reference implementations used as independent test oracles."""
import math

import numpy as np
from scipy.interpolate import BSpline


def naive_conv(x, w, b):
    B, C, H, W = x.shape
    O = w.shape[0]
    xp = np.zeros((B, C, H + 2, W + 2))
    xp[:, :, 1:-1, 1:-1] = x
    out = np.zeros((B, O, H, W))
    for n in range(B):
        for o in range(O):
            for i in range(H):
                for j in range(W):
                    acc = b[o]
                    for c in range(C):
                        for di in range(3):
                            for dj in range(3):
                                acc += w[o, c, di, dj] * xp[n, c, i + di, j + dj]
                    out[n, o, i, j] = acc
    return out


def naive_pool(x):
    B, C, H, W = x.shape
    out = np.zeros((B, C, H // 2, W // 2))
    for idx in np.ndindex(out.shape):
        n, c, i, j = idx
        out[idx] = max(x[n, c, 2 * i + a, 2 * j + b] for a in range(2) for b in range(2))
    return out


def naive_ce(z, labels):
    total = 0.0
    for row, y in zip(z, labels):
        m = max(row)
        total += -(row[y] - m - math.log(sum(math.exp(v - m) for v in row)))
    return total / len(labels)


def naive_silu(v):
    return v / (1.0 + math.exp(-v))


def naive_kan(x, knots, degree, lo, hi, coeffs, scaler, base):
    """Edge-by-edge KAN layer: y_j = sum_i base[j,i] silu(x_i) + scaler[j,i] spline_ji(x_i)."""
    B, n_in = x.shape
    n_out = coeffs.shape[0]
    y = np.zeros((B, n_out))
    for b in range(B):
        for j in range(n_out):
            for i in range(n_in):
                xi = min(max(x[b, i], lo), hi)
                spline = BSpline(knots[i], coeffs[j, i], degree, extrapolate=False)(xi)
                y[b, j] += base[j, i] * naive_silu(x[b, i]) + scaler[j, i] * spline
    return y
