import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jointdiff.errors import ContractError, DimensionError, NonFiniteError
from jointdiff.numerics import (
    Rng,
    Tensor,
    backward,
    concat,
    exp,
    interp_time,
    layer_norm,
    matmul,
    no_grad,
    sigmoid,
    silu,
    softmax,
    sqrt,
    tanh,
)
from jointdiff.numerics.gradcheck import check_elementwise
from jointdiff.numerics.nn import Attention, TransformerBlock


def t64(x, grad=True):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
        out = matmul(Tensor(np.eye(2)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_product(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[0], [1]]))
        np.testing.assert_array_equal(out.data, [[2], [4]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_batched_gradients(self):
        rng = Rng(0)
        a = t64(rng.normal((2, 3, 4)))
        b = t64(rng.normal((4, 5)))
        c = t64(rng.normal((2, 5, 3)))
        assert check_elementwise(lambda: ((a @ b) @ c).sum(), [a, b, c]) < 1e-6


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=1e-6)

    def test_no_overflow(self):
        out = softmax(Tensor([1000.0, 0.0])).data
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(1.0) and out[1] == pytest.approx(0.0, abs=1e-30)

    def test_closed_form(self):
        out = softmax(Tensor(np.array([math.log(2.0), 0.0]), dtype=np.float64)).data
        np.testing.assert_allclose(out, [2 / 3, 1 / 3], rtol=1e-12)

    def test_bad_axis(self):
        with pytest.raises(DimensionError):
            softmax(Tensor(np.ones((2, 2))), axis=2)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 7)),
                  elements=st.floats(-500, 500)), st.sampled_from([0, 1, -1]))
    def test_sums_to_one(self, x, axis):
        out = softmax(Tensor(x, dtype=np.float64), axis=axis).data
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=axis), 1.0, atol=1e-6)


class TestInterpTime:
    def test_identity_exact(self):
        x = Tensor(Rng(1).normal((5, 3)))
        assert interp_time(x, 5) is x

    def test_midpoint(self):
        out = interp_time(Tensor([[0.0], [10.0]]), 3)
        np.testing.assert_array_equal(out.data, [[0.0], [5.0], [10.0]])

    def test_broadcast_single_frame(self):
        out = interp_time(Tensor([[1.0, 2.0]]), 4)
        np.testing.assert_array_equal(out.data, [[1.0, 2.0]] * 4)

    def test_endpoints_fixed(self):
        x = Rng(2).normal((7, 3))
        out = interp_time(Tensor(x), 29).data
        np.testing.assert_array_equal(out[0], x[0])
        np.testing.assert_array_equal(out[-1], x[-1])

    def test_empty_input(self):
        with pytest.raises(DimensionError):
            interp_time(Tensor(np.zeros((0, 3))), 4)

    def test_gradient(self):
        x = t64(Rng(3).normal((2, 4, 3)))
        w = Rng(4).normal((2, 9, 3), dtype=np.float64)
        assert check_elementwise(lambda: (interp_time(x, 9) * w).sum(), [x]) < 1e-6


class TestBackward:
    def test_sum_of_squares(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward((x * x).sum())
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_detached_input_gets_no_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = Tensor([3.0], requires_grad=True)
        backward((y * 2.0).sum())
        assert x.grad is None or np.all(x.grad == 0)

    def test_non_scalar_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x * 2.0)

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 3.0
        assert not y.requires_grad

    def test_shared_subexpression_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        backward((y + y * x).sum())
        np.testing.assert_allclose(x.grad, [2 * 3 + 3 * 9])

    def test_non_finite_raises(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0]) / Tensor([0.0])


ELEMENTWISE = {
    "exp": lambda x: exp(x),
    "sqrt": lambda x: sqrt(x * x + 1.0),
    "tanh": tanh,
    "sigmoid": sigmoid,
    "silu": silu,
    "div": lambda x: 1.0 / (x * x + 2.0),
    "pow": lambda x: (x * x + 1.0) ** 1.5,
    "softmax": lambda x: softmax(x, axis=-1),
    "mean": lambda x: x.mean(axis=0, keepdims=True) * x,
    "transpose": lambda x: x.transpose(1, 0) @ x,
    "getitem": lambda x: x[1:, ::2] * 3.0,
    "fancy_index": lambda x: x[np.array([0, 0, 2])],
    "concat": lambda x: concat([x, x * 2.0], axis=0),
}


@pytest.mark.parametrize("name", sorted(ELEMENTWISE))
@pytest.mark.parametrize("seed", range(3))
def test_op_gradients_match_finite_differences(name, seed):
    rng = Rng(seed)
    x = t64(rng.normal((3, 4)))
    w = rng.normal(ELEMENTWISE[name](Tensor(x.data)).shape, dtype=np.float64)
    err = check_elementwise(lambda: (ELEMENTWISE[name](x) * w).sum(), [x], eps=1e-3)
    assert err < 1e-3


def test_layer_norm_gradient():
    rng = Rng(5)
    x, g, b = t64(rng.normal((2, 3, 6))), t64(rng.normal(6)), t64(rng.normal(6))
    w = rng.normal((2, 3, 6), dtype=np.float64)
    assert check_elementwise(lambda: (layer_norm(x, g, b) * w).sum(), [x, g, b]) < 1e-3


@pytest.mark.parametrize("context", [False, True])
def test_attention_block_gradient(context):
    rng = Rng(6)
    block = TransformerBlock(8, 2, rng, context_dim=5 if context else None).astype(np.float64)
    x = t64(rng.normal((2, 4, 8)))
    ctx = t64(rng.normal((2, 3, 5))) if context else None
    w = rng.normal((2, 4, 8), dtype=np.float64)
    params = [x] + block.parameters() + ([ctx] if context else [])
    assert check_elementwise(lambda: (block(x, ctx) * w).sum(), params) < 1e-3


def test_attention_rows_are_convex_combinations():
    rng = Rng(7)
    attn = Attention(4, 1, rng)
    ctx = Tensor(np.repeat(rng.normal((1, 1, 4)), 5, axis=1))
    out1 = attn(Tensor(rng.normal((1, 3, 4))), ctx).data
    out2 = attn(Tensor(rng.normal((1, 3, 4))), ctx).data
    # identical keys/values: every query reads the same value vector
    np.testing.assert_allclose(out1, out2, rtol=1e-5)


class TestRng:
    def test_same_seed_same_stream(self):
        np.testing.assert_array_equal(Rng(42).normal(100), Rng(42).normal(100))

    def test_children_differ(self):
        r = Rng(1)
        assert not np.array_equal(r.child(0).normal(10), r.child(1).normal(10))

    def test_gaussian_moments(self):
        n = 10**6
        z = Rng(9).normal(n, dtype=np.float64)
        # 3-sigma bounds: se(mean) = 1/sqrt(n), se(var) = sqrt(2/n)
        assert abs(z.mean()) < 3 / math.sqrt(n)
        assert abs(z.var() - 1.0) < 3 * math.sqrt(2 / n)

    def test_integers_inclusive(self):
        draws = Rng(3).integers(1, 3, size=1000)
        assert set(draws.tolist()) == {1, 2, 3}
