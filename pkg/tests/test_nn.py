import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kandefect.gradcheck import CASES, check_gradients
from kandefect.nn import (
    Conv2d,
    Linear,
    conv2d,
    linear,
    maxpool2,
    relu,
    silu,
    softmax,
    softmax_cross_entropy,
)
from kandefect.tensor import ShapeError, Tape, Tensor
from oracles import naive_ce, naive_conv, naive_pool


class TestActivations:
    def test_relu(self):
        assert relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]

    def test_silu_values(self):
        x = np.array([-30.0, -1.0, 0.0, 1.0, 30.0, 800.0, -800.0])
        ref = [v / (1 + math.exp(-v)) if v > -700 else 0.0 for v in x]
        assert np.allclose(silu(Tensor(x)).data, ref, rtol=1e-14, atol=1e-300)
        assert np.all(np.isfinite(silu(Tensor(x)).data))

    def test_softmax_rows_sum_to_one(self):
        p = softmax(np.array([[1000.0, 0.0], [1.0, 2.0]]))
        assert np.allclose(p.sum(axis=1), 1.0)
        assert p[0, 0] == 1.0


class TestConv:
    def test_matches_naive_loops(self):
        rng = np.random.default_rng(0)
        x, w, b = rng.normal(size=(2, 3, 5, 6)), rng.normal(size=(4, 3, 3, 3)), rng.normal(size=4)
        out = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
        assert np.max(np.abs(out - naive_conv(x, w, b))) < 1e-12

    def test_identity_kernel(self):
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        x = np.random.default_rng(1).normal(size=(1, 1, 4, 4))
        assert np.allclose(conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1))).data, x)

    def test_channel_mismatch(self):
        with pytest.raises(ShapeError, match="conv2d"):
            conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))), Tensor(np.ones(1)))

    def test_layer_param_count(self):
        assert Conv2d(1, 5, np.random.default_rng(0)).param_count() == 50


class TestPool:
    def test_matches_naive(self):
        x = np.random.default_rng(2).normal(size=(2, 3, 6, 4))
        assert np.array_equal(maxpool2(Tensor(x)).data, naive_pool(x))

    def test_odd_size_rejected(self):
        with pytest.raises(ShapeError, match="maxpool2"):
            maxpool2(Tensor(np.ones((1, 1, 5, 4))))

    def test_tie_gradient_goes_to_first_element(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = maxpool2(x).sum()
        g = tape.backward(loss)[x]
        assert g.reshape(-1).tolist() == [1.0, 0.0, 0.0, 0.0]


class TestLinearAndLoss:
    def test_zero_input_gives_bias(self):
        layer = Linear(4, 3, np.random.default_rng(0))
        out = layer(Tensor(np.zeros((2, 4)))).data
        assert np.array_equal(out, np.tile(layer.bias.data, (2, 1)))

    def test_linear_shape_error(self):
        with pytest.raises(ShapeError, match="linear"):
            linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 4))), Tensor(np.ones(4)))

    def test_cross_entropy_matches_naive(self):
        rng = np.random.default_rng(3)
        z = 5 * rng.normal(size=(7, 6))
        y = rng.integers(0, 6, 7)
        assert abs(softmax_cross_entropy(Tensor(z), y).item() - naive_ce(z, y)) < 1e-12

    def test_uniform_logits(self):
        assert abs(softmax_cross_entropy(Tensor(np.zeros((3, 6))), [0, 1, 5]).item() - math.log(6)) < 1e-15

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(Tensor(np.zeros((1, 3))), [3])

    def test_cross_entropy_gradient_is_softmax_minus_onehot(self):
        z = Tensor(np.array([[1.0, 2.0, 0.5]]), requires_grad=True)
        with Tape() as tape:
            loss = softmax_cross_entropy(z, [1])
        g = tape.backward(loss)[z]
        assert np.allclose(g, softmax(z.data) - np.array([[0, 1, 0]]), atol=1e-15)


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_gradients_small_sample(name):
    rng = np.random.default_rng(42)
    for _ in range(5):
        operands, fn = CASES[name](rng)
        assert check_gradients(fn, operands, rng) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), h=st.integers(1, 3), w=st.integers(1, 3))
def test_conv_is_linear_in_input(seed, h, w):
    rng = np.random.default_rng(seed)
    wt = Tensor(rng.normal(size=(2, 2, 3, 3)))
    zero = Tensor(np.zeros(2))
    a, b = rng.normal(size=(2, 1, 2, 2 * h, 2 * w))
    lhs = conv2d(Tensor(a + 2 * b), wt, zero).data
    rhs = conv2d(Tensor(a), wt, zero).data + 2 * conv2d(Tensor(b), wt, zero).data
    assert np.max(np.abs(lhs - rhs)) < 1e-12
