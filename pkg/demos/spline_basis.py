"""
B-spline bases and adaptive grids
=================================

Every KAN edge is a cubic B-spline on a small knot grid.  This walks
through the basis, a least-squares fit, and moving the grid toward
where the data actually lives.
"""

import numpy as np

from kandefect.bspline import adapt_grid, basis_eval, fit_least_squares, make_uniform_grid, spline_eval

# five intervals on [-1, 1], cubic: 12 knots and 8 basis functions
grid = make_uniform_grid(-1.0, 1.0, 5, 3)
print("knots:", np.round(grid.knots, 3))
print("basis count:", grid.n_basis)

###############################################################################
# At any point at most four cubic pieces are active and they sum to one.

x = np.linspace(-1, 1, 9)
B = basis_eval(grid, x)
print(np.round(B, 3))
print("row sums:", B.sum(axis=1))

###############################################################################
# Fitting a smooth target by least squares

xs = np.linspace(-1, 1, 200)
target = np.sin(np.pi * xs)
coeffs = fit_least_squares(grid, xs, target)
print("max fit error, G=5:", np.abs(spline_eval(grid, coeffs, xs) - target).max())

fine = make_uniform_grid(-1.0, 1.0, 20, 3)
print("max fit error, G=20:", np.abs(spline_eval(fine, fit_least_squares(fine, xs, target), xs) - target).max())

###############################################################################
# Grid adaptation
# ---------------
#
# When activations bunch up in one part of the range, the interior knots
# follow their quantiles.  The refit keeps the function on the samples
# within 1e-3; if a full move would break that, the move is shortened.

rng = np.random.default_rng(0)
samples = np.clip(rng.normal(0.4, 0.15, 500), -1, 1)
new_grid, new_coeffs = adapt_grid(grid, coeffs, samples)
print("old interior knots:", np.round(grid.knots[4:8], 3))
print("new interior knots:", np.round(new_grid.knots[4:8], 3))
drift = np.abs(spline_eval(new_grid, new_coeffs, samples) - spline_eval(grid, coeffs, samples)).max()
print("largest change on the samples:", drift)
