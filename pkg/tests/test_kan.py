import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kandefect.bspline import make_uniform_grid, spline_eval
from kandefect.kan import KANLinear, KanConfig, kan_forward, kan_init, kan_update_grids
from kandefect.tensor import ShapeError, Tape, Tensor
from oracles import naive_kan


def layer_oracle(layer, x):
    return naive_kan(
        x, layer.knots, layer.degree, layer.lo, layer.hi,
        layer.spline_coeffs.data, layer.spline_scaler.data, layer.base_weight.data,
    )


def test_param_count_2_to_3():
    layer = kan_init(2, 3, make_uniform_grid(-1, 1, 5, 3), seed=0)
    assert layer.param_count() == 60
    assert layer.spline_coeffs.shape == (3, 2, 8)


def test_base_term_off_drops_base_weights():
    layer = kan_init(2, 3, seed=0, base_term=False)
    assert layer.param_count() == 54
    x = np.random.default_rng(0).uniform(-1, 1, (4, 2))
    assert np.allclose(kan_forward(layer, Tensor(x)).data, layer_oracle(layer, x), atol=1e-12)


def test_zero_coefficients_give_zero_spline_part():
    layer = kan_init(4, 2, seed=1, base_term=False)
    layer.spline_coeffs.data[...] = 0.0
    assert np.all(kan_forward(layer, Tensor(np.random.default_rng(1).normal(size=(3, 4)))).data == 0)


def test_constant_coefficients_give_constant_edges():
    layer = kan_init(3, 2, seed=2, base_term=False)
    layer.spline_coeffs.data[...] = 0.5
    y = kan_forward(layer, Tensor(np.random.default_rng(2).uniform(-1, 1, (5, 3)))).data
    assert np.allclose(y, 1.5, atol=1e-12)


def test_matches_edge_by_edge_oracle():
    layer = kan_init(3, 4, seed=3)
    rng = np.random.default_rng(3)
    layer.spline_scaler.data[...] = rng.normal(size=(4, 3))
    x = rng.uniform(-1.2, 1.2, (6, 3))
    assert np.max(np.abs(kan_forward(layer, Tensor(x)).data - layer_oracle(layer, x))) < 1e-12


def test_init_statistics():
    layer = kan_init(50, 40, seed=4)
    bound = np.sqrt(6 / 50)
    assert np.all(np.abs(layer.base_weight.data) <= bound)
    assert abs(np.std(layer.spline_coeffs.data) - 0.1 / np.sqrt(8)) < 0.003
    assert np.all(layer.spline_scaler.data == 1.0)


def test_init_is_seeded():
    a, b = kan_init(3, 2, seed=9), kan_init(3, 2, seed=9)
    assert np.array_equal(a.spline_coeffs.data, b.spline_coeffs.data)
    assert np.array_equal(a.base_weight.data, b.base_weight.data)


def test_shape_errors():
    layer = kan_init(3, 2, seed=0)
    with pytest.raises(ShapeError, match="kan_forward"):
        kan_forward(layer, Tensor(np.ones((2, 4))))
    with pytest.raises(ShapeError):
        KANLinear(2, 3, make_uniform_grid(), np.zeros((3, 2)), np.zeros((3, 2, 7)), np.ones((3, 2)))


def test_default_config_grid():
    g = KanConfig().grid()
    assert (g.intervals, g.degree, g.lo, g.hi) == (5, 3, -1.0, 1.0)


def test_layer_gradients_reach_all_parameters():
    layer = kan_init(3, 2, seed=5)
    x = Tensor(np.random.default_rng(5).uniform(-1, 1, (4, 3)), requires_grad=True)
    with Tape() as tape:
        loss = kan_forward(layer, x).sum()
    grads = tape.backward(loss)
    for t in (x, layer.spline_coeffs, layer.spline_scaler, layer.base_weight):
        assert grads[t].shape == t.shape
        assert np.any(grads[t] != 0)


class TestGridUpdate:
    def test_output_preserved_on_batch(self):
        layer = kan_init(4, 3, seed=6)
        rng = np.random.default_rng(6)
        layer.spline_coeffs.data[...] = rng.normal(0, 0.3, layer.spline_coeffs.shape)
        batch = np.clip(rng.normal(0.2, 0.3, (200, 4)), -1, 1)
        before = kan_forward(layer, Tensor(batch)).data
        kan_update_grids(layer, batch)
        after = kan_forward(layer, Tensor(batch)).data
        assert np.max(np.abs(after - before)) < 1e-3

    def test_grids_move_toward_data(self):
        layer = kan_init(2, 2, seed=7)
        batch = np.random.default_rng(7).normal(0.5, 0.1, (300, 2))
        old = layer.knots.copy()
        kan_update_grids(layer, batch, blend=0.0, tol=None)
        interior = slice(layer.degree + 1, layer.degree + layer.intervals)
        assert np.all(np.abs(layer.knots[:, interior] - 0.5) < np.abs(old[:, interior] - 0.5) + 1e-12)
        assert np.all(np.diff(layer.knots, axis=1) > 0)

    def test_rejects_bad_batch(self):
        layer = kan_init(2, 2, seed=0)
        with pytest.raises(ShapeError):
            kan_update_grids(layer, np.zeros((5, 3)))
        with pytest.raises(ValueError):
            kan_update_grids(layer, np.zeros((0, 2)))

    def test_column_grid_view(self):
        layer = kan_init(2, 1, seed=0, base_term=False)
        kan_update_grids(layer, np.random.default_rng(8).normal(0, 0.3, (100, 2)), blend=0.0, tol=None)
        x = np.linspace(-1, 1, 7)
        col = spline_eval(layer.grid(1), layer.spline_coeffs.data[0, 1], x)
        probe = np.stack([np.zeros_like(x), x], axis=1)
        layer.spline_coeffs.data[0, 0] = 0.0
        assert np.allclose(kan_forward(layer, Tensor(probe)).data[:, 0], col, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_in=st.integers(1, 4), n_out=st.integers(1, 3))
def test_forward_matches_oracle_property(seed, n_in, n_out):
    layer = kan_init(n_in, n_out, seed=seed)
    x = np.random.default_rng(seed).uniform(-1.5, 1.5, (3, n_in))
    assert np.max(np.abs(kan_forward(layer, Tensor(x)).data - layer_oracle(layer, x))) < 1e-12
