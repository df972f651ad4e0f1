import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from kandefect.bspline import (
    KnotGrid,
    adapt_grid,
    adapted_knots,
    basis_derivative,
    basis_eval,
    fit_least_squares,
    make_uniform_grid,
    spline_eval,
)


def scipy_design(grid, x):
    """Independent basis oracle: scipy's B-spline design matrix on the same knots."""
    return BSpline.design_matrix(np.atleast_1d(x), grid.knots, grid.degree).toarray()


class TestUniformGrid:
    def test_cubic_knots(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        expected = [-2.2, -1.8, -1.4, -1.0, -0.6, -0.2, 0.2, 0.6, 1.0, 1.4, 1.8, 2.2]
        assert np.allclose(g.knots, expected, atol=1e-12)
        assert g.n_basis == 8
        assert g.knots[3] == -1.0 and g.knots[8] == 1.0
        assert np.ptp(np.diff(g.knots)) < 1e-12

    def test_degenerate_indicator(self):
        g = make_uniform_grid(0, 1, 1, 0)
        assert g.knots.tolist() == [0.0, 1.0]
        assert g.n_basis == 1

    @pytest.mark.parametrize("lo,hi,G", [(1, 1, 3), (2, 1, 3), (0, 1, 0)])
    def test_invalid(self, lo, hi, G):
        with pytest.raises(ValueError, match="invalid"):
            make_uniform_grid(lo, hi, G, 3)

    def test_knot_count_checked(self):
        with pytest.raises(ValueError):
            KnotGrid(3, 5, -1.0, 1.0, np.zeros(5))


class TestBasis:
    def test_degree0_indicator(self):
        g = make_uniform_grid(0, 1, 5, 0)
        assert basis_eval(g, 0.3).tolist() == [0, 1, 0, 0, 0]

    def test_uniform_cubic_midpoint(self):
        # uniform cubic span polynomials at u = 0.5
        u = 0.5
        span = [(1 - u) ** 3 / 6, (3 * u**3 - 6 * u**2 + 4) / 6, (-3 * u**3 + 3 * u**2 + 3 * u + 1) / 6, u**3 / 6]
        assert np.allclose(span, [1 / 48, 23 / 48, 23 / 48, 1 / 48])
        g = make_uniform_grid(-1, 1, 5, 3)
        b = basis_eval(g, 0.0)
        assert np.allclose(b, [0, 0] + span + [0, 0], atol=1e-15)

    @pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
    def test_matches_scipy_design_matrix(self, k):
        g = make_uniform_grid(-1, 1, 6, k)
        x = np.random.default_rng(k).uniform(-1, 1, 200)
        assert np.max(np.abs(basis_eval(g, x) - scipy_design(g, x))) < 1e-13

    def test_nonuniform_matches_scipy(self):
        g = adapted_knots(make_uniform_grid(), np.random.default_rng(1).normal(0, 0.3, 300), blend=0.0)
        x = np.random.default_rng(2).uniform(-1, 1, 200)
        assert np.max(np.abs(basis_eval(g, x) - scipy_design(g, x))) < 1e-12

    @pytest.mark.parametrize("k", [0, 1, 2, 3])
    def test_partition_of_unity(self, k):
        g = make_uniform_grid(-1, 1, 5, k)
        x = np.concatenate([np.random.default_rng(0).uniform(-1, 1, 1000), [-1.0, 1.0]])
        assert np.max(np.abs(basis_eval(g, x).sum(axis=-1) - 1)) < 1e-9

    def test_local_support_and_nonnegativity(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        B = basis_eval(g, np.random.default_rng(4).uniform(-1, 1, 1000))
        assert np.all(B >= 0)
        for row in B:
            nz = np.flatnonzero(row)
            assert len(nz) <= 4
            assert np.array_equal(nz, np.arange(nz[0], nz[-1] + 1))

    def test_clamped_outside_range(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        assert np.array_equal(basis_eval(g, 5.0), basis_eval(g, 1.0))
        assert np.array_equal(basis_eval(g, -3.0), basis_eval(g, -1.0))
        assert np.all(basis_derivative(g, 5.0) == 0)


class TestDerivative:
    def test_constant_spline_has_zero_derivative(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        x = np.linspace(-1, 1, 50)
        assert np.max(np.abs(basis_derivative(g, x) @ np.full(8, 1.7))) < 1e-12

    def test_matches_finite_differences(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        x = np.random.default_rng(5).uniform(-0.999, 0.999, 100)
        h = 1e-6
        fd = (basis_eval(g, x + h) - basis_eval(g, x - h)) / (2 * h)
        an = basis_derivative(g, x)
        rel = np.abs(an - fd) / np.maximum(np.abs(fd), 1e-3)
        assert np.max(rel) < 1e-6 * 1e3 or np.max(np.abs(an - fd)) < 1e-8
        assert np.max(np.abs(an - fd) / np.max(np.abs(fd))) < 1e-6

    def test_matches_scipy_derivative(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        x = np.random.default_rng(6).uniform(-1, 1, 100)
        for m in range(g.n_basis):
            c = np.zeros(g.n_basis)
            c[m] = 1.0
            ref = BSpline(g.knots, c, 3).derivative()(x)
            assert np.max(np.abs(basis_derivative(g, x)[:, m] - ref)) < 1e-12

    def test_degree0_derivative_is_zero(self):
        g = make_uniform_grid(0, 1, 5, 0)
        assert np.all(basis_derivative(g, np.array([0.1, 0.5, 0.93])) == 0)


class TestSplineEvalAndFit:
    def test_constant_coefficients(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        x = np.linspace(-1, 1, 101)
        assert np.allclose(spline_eval(g, np.full(8, 2.5), x), 2.5, atol=1e-12)

    def test_naive_dot_product(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        rng = np.random.default_rng(7)
        c = rng.normal(size=8)
        for x in rng.uniform(-1, 1, 20):
            b = basis_eval(g, x)
            naive = 0.0
            for m in range(8):
                naive += c[m] * b[m]
            assert abs(spline_eval(g, c, x) - naive) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="basis count"):
            spline_eval(make_uniform_grid(), np.ones(7), 0.0)

    def test_fit_identity(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        xs = np.linspace(-1, 1, 200)
        c = fit_least_squares(g, xs, xs)
        x = np.random.default_rng(8).uniform(-0.99, 0.99, 100)
        # ridge damping leaves a bias of order 1e-8
        assert np.max(np.abs(spline_eval(g, c, x) - x)) < 1e-6

    def test_fit_zero(self):
        g = make_uniform_grid()
        c = fit_least_squares(g, np.linspace(-1, 1, 50), np.zeros(50))
        assert np.all(c == 0)

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_polynomial_reproduction(self, k):
        g = make_uniform_grid(-1, 1, 5, k)
        rng = np.random.default_rng(k)
        xs = np.linspace(-1, 1, 200)
        for _ in range(5):
            poly = np.polynomial.Polynomial(rng.normal(size=k + 1))
            c = fit_least_squares(g, xs, poly(xs))
            assert np.max(np.abs(spline_eval(g, c, xs) - poly(xs))) < 1e-6

    def test_sin_fit_matches_dense_lstsq(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        xs = np.linspace(-1, 1, 200)
        ys = np.sin(np.pi * xs)
        ref, *_ = scipy.linalg.lstsq(scipy_design(g, xs), ys)
        c = fit_least_squares(g, xs, ys)
        ours = spline_eval(g, c, xs) - ys
        theirs = scipy_design(g, xs) @ ref - ys
        assert np.max(np.abs(ours - theirs)) < 1e-6

    def test_multi_column_fit(self):
        g = make_uniform_grid()
        xs = np.linspace(-1, 1, 80)
        ys = np.stack([xs, xs**2], axis=1)
        c = fit_least_squares(g, xs, ys)
        assert c.shape == (8, 2)
        assert np.allclose(spline_eval(g, c, xs), ys, atol=1e-6)


class TestAdaptGrid:
    def test_uniform_samples_full_blend_is_fixed_point(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        samples = np.linspace(-1, 1, 201)
        c = np.random.default_rng(0).normal(size=8)
        ng, nc = adapt_grid(g, c, samples, blend=1.0)
        assert np.max(np.abs(ng.knots - g.knots)) < 1e-12

    def test_constant_samples_give_valid_knots(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        for blend in (1.0, 0.02, 0.0):
            ng, nc = adapt_grid(g, np.zeros(8), np.full(40, 0.3), blend=blend)
            assert np.all(np.diff(ng.knots) > 0)
            assert ng.knots[3] == -1.0 and ng.knots[8] == 1.0

    def test_pure_quantile_knots_follow_samples(self):
        g = make_uniform_grid(-1, 1, 4, 3)
        samples = np.random.default_rng(1).uniform(0, 1, 4001)
        ng = adapted_knots(g, samples, blend=0.0)
        assert np.allclose(ng.knots[4:7], np.quantile(samples, [0.25, 0.5, 0.75]))

    def test_blend_bounds(self):
        with pytest.raises(ValueError):
            adapt_grid(make_uniform_grid(), np.zeros(8), [0.0], blend=1.5)
        with pytest.raises(ValueError):
            adapt_grid(make_uniform_grid(), np.zeros(8), [])

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        coeff_scale=st.sampled_from([0.035, 0.3, 1.0]),
        dist=st.sampled_from(["uniform", "normal", "skewed", "clustered"]),
        n=st.integers(1, 400),
    )
    def test_function_preserved_on_samples(self, seed, coeff_scale, dist, n):
        rng = np.random.default_rng(seed)
        g = make_uniform_grid(-1, 1, 5, 3)
        c = rng.normal(0, coeff_scale, 8)
        samples = {
            "uniform": lambda: rng.uniform(-1, 1, n),
            "normal": lambda: rng.normal(0, 0.3, n),
            "skewed": lambda: np.abs(rng.normal(0, 0.5, n)),
            "clustered": lambda: rng.choice([-0.5, 0.2], n) + rng.normal(0, 0.02, n),
        }[dist]()
        ng, nc = adapt_grid(g, c, samples)
        x = np.clip(samples, -1, 1)
        assert np.max(np.abs(spline_eval(ng, nc, x) - spline_eval(g, c, x))) < 1e-3
        assert np.all(np.diff(ng.knots) > 0)

    def test_back_off_still_moves_knots_when_possible(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        rng = np.random.default_rng(2)
        samples = rng.normal(0.3, 0.2, 300)
        ng, _ = adapt_grid(g, rng.normal(0, 0.035, 8), samples)
        assert not np.allclose(ng.knots, g.knots)

    def test_without_tolerance_takes_target_knots(self):
        g = make_uniform_grid(-1, 1, 5, 3)
        samples = np.random.default_rng(3).normal(0, 0.3, 300)
        ng, _ = adapt_grid(g, np.random.default_rng(4).normal(size=8), samples, tol=None)
        assert np.array_equal(ng.knots, adapted_knots(g, samples).knots)
