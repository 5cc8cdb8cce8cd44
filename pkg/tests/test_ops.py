"""Forward oracles and central-difference gradient checks for every op."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ticketlab.errors import ShapeError, StateError
from ticketlab.numerics import (
    Tape,
    Tensor,
    add,
    backward,
    cross_entropy,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mse,
    mul,
    reshape,
    slice_rows,
    softmax,
    sub,
    swapaxes,
    take_position,
    transpose2d,
)

from .conftest import rand_array


def numeric_grads(f, arrays, eps=1e-5):
    """Central-difference gradient of scalar f(arrays) w.r.t. each array."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(arrays)
            flat[i] = orig - eps
            lo = f(arrays)
            flat[i] = orig
            gf[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads


def grad_check(op_fn, *arrays, atol=1e-7, rtol=1e-6, seed=0):
    """Tape gradients of sum(w * op(arrays)) must match central differences.

    ``w`` is a fixed random cotangent so every output element contributes.
    Run under the f64 fixture; float32 would drown the comparison.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    probe = op_fn(*arrays).data
    w = rand_array(probe.shape, seed=seed + 1000)

    def numeric(arrs):
        return float((op_fn(*arrs).data * w).sum())

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with Tape():
        out = op_fn(*leaves)
        if out.data.shape == ():
            loss = mul(out, Tensor(w))
        else:
            flat = reshape(out, (1, out.size))
            loss = reshape(matmul(flat, Tensor(w.reshape(-1, 1))), ())
        backward(loss)

    expected = numeric_grads(numeric, arrays)
    for leaf, num in zip(leaves, expected):
        assert leaf.grad is not None
        assert np.allclose(leaf.grad, num, atol=atol, rtol=rtol), (
            f"max err {np.abs(leaf.grad - num).max():g}"
        )


class TestForwardOracles:
    def test_matmul_triple_loop(self, f64):
        a = rand_array((3, 4), 1)
        b = rand_array((4, 5), 2)
        got = matmul(a, b).data
        want = np.zeros((3, 5))
        for i in range(3):
            for j in range(5):
                acc = 0.0
                for k in range(4):
                    acc += a[i, k] * b[k, j]
                want[i, j] = acc
        assert np.allclose(got, want, atol=1e-12, rtol=0)

    def test_softmax_definition(self, f64):
        x = rand_array((4, 6), 3)
        got = softmax(x).data
        for r in range(4):
            e = np.exp(x[r] - x[r].max())
            assert np.allclose(got[r], e / e.sum(), atol=1e-14, rtol=0)

    def test_softmax_frozen_values(self, f64):
        got = softmax(np.array([[0.5, -1.25, 2.0]])).data[0]
        want = [0.17682018210744427, 0.030726740326436432, 0.7924530775661193]
        assert np.allclose(got, want, atol=1e-15, rtol=0)

    def test_gelu_frozen_values(self, f64):
        pts = np.array([-2.0, -0.5, 0.0, 0.5, 1.0, 3.0])
        want = np.array([-0.04540230591222494, -0.15428599017485606, 0.0,
                         0.34571400982514394, 0.8411919906082768, 2.996362607918227])
        assert np.allclose(gelu(pts).data, want, atol=1e-15, rtol=0)

    def test_gelu_tanh_formula(self, f64):
        x = rand_array((50,), 4)
        c, a = math.sqrt(2.0 / math.pi), 0.044715
        want = 0.5 * x * (1.0 + np.tanh(c * (x + a * x ** 3)))
        assert np.allclose(gelu(x).data, want, atol=1e-12, rtol=0)

    def test_layer_norm_definition(self, f64):
        x = rand_array((2, 3, 5), 5)
        gain = rand_array((5,), 6)
        bias = rand_array((5,), 7)
        got = layer_norm(x, gain, bias).data
        mu = x.mean(-1, keepdims=True)
        var = x.var(-1, keepdims=True)
        want = (x - mu) / np.sqrt(var + 1e-12) * gain + bias
        assert np.allclose(got, want, atol=1e-12, rtol=0)
        # rows come out with zero mean and unit variance before scale-shift
        xhat = layer_norm(x, np.ones(5), np.zeros(5)).data
        assert np.allclose(xhat.mean(-1), 0.0, atol=1e-12)
        assert np.allclose(xhat.var(-1), 1.0, atol=1e-6)

    def test_cross_entropy_log_sum_exp(self, f64):
        z = rand_array((6, 4), 8, scale=3.0)
        t = np.array([0, 3, 1, 1, 2, 0])
        nll = [math.log(np.exp(z[i] - z[i].max()).sum()) + z[i].max() - z[i, t[i]]
               for i in range(6)]
        assert np.isclose(cross_entropy(z, t).item(), np.mean(nll), atol=1e-12, rtol=0)

    def test_cross_entropy_weighted(self, f64):
        z = rand_array((5, 3), 9)
        t = np.array([2, 0, 1, 2, 1])
        w = np.array([1.0, 0.0, 2.0, 0.0, 1.0])
        lse = np.log(np.exp(z).sum(axis=1))
        nll = lse - z[np.arange(5), t]
        want = (w * nll).sum() / w.sum()
        assert np.isclose(cross_entropy(z, t, w).item(), want, atol=1e-12, rtol=0)

    def test_mse_definition(self, f64):
        p = rand_array((3, 4), 10)
        t = rand_array((3, 4), 11)
        assert np.isclose(mse(p, t).item(), ((p - t) ** 2).mean(), atol=1e-15, rtol=0)

    def test_embedding_lookup_rows(self, f64):
        table = rand_array((7, 3), 12)
        ids = np.array([[0, 6, 2], [2, 2, 5]])
        got = embedding_lookup(table, ids).data
        assert got.shape == (2, 3, 3)
        for b in range(2):
            for t in range(3):
                assert np.array_equal(got[b, t], table[ids[b, t]])


class TestGradientChecks:
    def test_add_broadcast(self, f64):
        grad_check(add, rand_array((3, 4), 1), rand_array((4,), 2))
        grad_check(add, rand_array((2, 1, 4), 3), rand_array((3, 1), 4))

    def test_sub_broadcast(self, f64):
        grad_check(sub, rand_array((3, 4), 5), rand_array((3, 1), 6))

    def test_mul_broadcast(self, f64):
        grad_check(mul, rand_array((3, 4), 7), rand_array((4,), 8))
        grad_check(mul, rand_array((5,), 9), rand_array((5,), 10))

    def test_matmul_2d(self, f64):
        grad_check(matmul, rand_array((3, 4), 11), rand_array((4, 2), 12))

    def test_matmul_batched_times_2d(self, f64):
        grad_check(matmul, rand_array((2, 3, 4), 13), rand_array((4, 2), 14))

    def test_matmul_batched_both(self, f64):
        grad_check(matmul, rand_array((2, 3, 4), 15), rand_array((2, 4, 2), 16))

    def test_softmax(self, f64):
        grad_check(softmax, rand_array((3, 5), 17))

    def test_gelu(self, f64):
        grad_check(gelu, rand_array((4, 4), 18))

    def test_layer_norm(self, f64):
        grad_check(layer_norm, rand_array((2, 4, 6), 19),
                   rand_array((6,), 20), rand_array((6,), 21),
                   atol=1e-6)

    def test_cross_entropy(self, f64):
        t = np.array([1, 0, 2, 2])
        grad_check(lambda z: cross_entropy(z, t), rand_array((4, 3), 22))

    def test_cross_entropy_weighted(self, f64):
        t = np.array([1, 0, 2, 2])
        w = np.array([1.0, 0.0, 1.0, 2.0])
        grad_check(lambda z: cross_entropy(z, t, w), rand_array((4, 3), 23))

    def test_mse(self, f64):
        grad_check(mse, rand_array((3, 4), 24), rand_array((3, 4), 25))

    def test_reshape_swapaxes_transpose(self, f64):
        grad_check(lambda x: reshape(x, (6, 2)), rand_array((3, 4), 26))
        grad_check(lambda x: swapaxes(x, 0, 2), rand_array((2, 3, 4), 27))
        grad_check(transpose2d, rand_array((3, 5), 28))

    def test_slice_rows(self, f64):
        grad_check(lambda x: slice_rows(x, 3), rand_array((6, 4), 29))

    def test_take_position(self, f64):
        grad_check(lambda x: take_position(x, 0), rand_array((2, 5, 3), 30))
        grad_check(lambda x: take_position(x, 4), rand_array((2, 5, 3), 31))

    def test_embedding_lookup_repeated_ids(self, f64):
        ids = np.array([[0, 2, 2], [2, 1, 0]])
        grad_check(lambda t: embedding_lookup(t, ids), rand_array((4, 3), 32))

    def test_composite_chain(self, f64):
        # two-layer MLP against numeric differences, exercising reuse
        def net(x, w1, w2):
            return matmul(gelu(matmul(x, w1)), w2)

        grad_check(net, rand_array((3, 4), 33), rand_array((4, 6), 34),
                   rand_array((6, 2), 35))


class TestTapeSemantics:
    def test_accumulates_over_multiple_uses(self, f64):
        x = Tensor(np.array([[1.5, -0.5]]), requires_grad=True)
        with Tape():
            y = add(mul(x, x), mul(x, x))  # 2x^2 elementwise
            loss = reshape(matmul(y, Tensor(np.ones((2, 1)))), ())
            backward(loss)
        assert np.allclose(x.grad, 4.0 * x.data, atol=1e-12)

    def test_no_tape_means_no_grads(self, f64):
        x = Tensor(np.array(3.0), requires_grad=True)
        out = mul(x, x)  # built outside any tape
        assert out._tape is None
        with pytest.raises(StateError):
            backward(out)

    def test_backward_requires_scalar(self, f64):
        x = Tensor(rand_array((2, 2), 2), requires_grad=True)
        with Tape():
            y = mul(x, x)
            with pytest.raises(ShapeError):
                backward(y)

    def test_double_backward_rejected(self, f64):
        x = Tensor(np.array(2.0), requires_grad=True)
        with Tape():
            y = mul(x, x)
            backward(y)
            with pytest.raises(StateError):
                backward(y)

    def test_requires_grad_propagates(self, f64):
        frozen = Tensor(rand_array((2, 2), 3))
        live = Tensor(rand_array((2, 2), 4), requires_grad=True)
        with Tape():
            assert not mul(frozen, frozen).requires_grad
            assert mul(frozen, live).requires_grad

    def test_frozen_leaf_gets_no_grad(self, f64):
        frozen = Tensor(rand_array((2, 2), 5))
        live = Tensor(rand_array((2, 2), 6), requires_grad=True)
        with Tape():
            loss = reshape(matmul(mul(frozen, live), Tensor(np.ones((2, 1)))), (2,))
            loss = reshape(matmul(reshape(loss, (1, 2)), Tensor(np.ones((2, 1)))), ())
            backward(loss)
        assert frozen.grad is None
        assert np.allclose(live.grad, frozen.data, atol=1e-15)


class TestShapeValidation:
    def test_matmul_rejects_1d(self):
        with pytest.raises(ShapeError):
            matmul(np.ones(3), np.ones((3, 2)))

    def test_matmul_inner_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((4, 2)))

    def test_matmul_batch_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3, 4)), np.ones((3, 4, 2)))

    def test_layer_norm_gain_mismatch(self):
        with pytest.raises(ShapeError):
            layer_norm(np.ones((2, 4)), np.ones(3), np.ones(4))

    def test_cross_entropy_target_range(self):
        with pytest.raises(IndexError):
            cross_entropy(np.zeros((2, 3)), np.array([0, 3]))

    def test_cross_entropy_zero_weight_total(self):
        with pytest.raises(ShapeError):
            cross_entropy(np.zeros((2, 3)), np.array([0, 1]), np.zeros(2))

    def test_embedding_id_range(self):
        with pytest.raises(IndexError):
            embedding_lookup(np.ones((4, 2)), np.array([0, 4]))

    def test_embedding_requires_integer_ids(self):
        with pytest.raises(ShapeError):
            embedding_lookup(np.ones((4, 2)), np.array([0.5, 1.0]))

    def test_slice_rows_bounds(self):
        with pytest.raises(ShapeError):
            slice_rows(np.ones((3, 2)), 4)

    def test_take_position_bounds(self):
        with pytest.raises(ShapeError):
            take_position(np.ones((2, 3, 4)), 3)

    def test_mse_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse(np.ones((2, 3)), np.ones((3, 2)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-30, 30), min_size=2, max_size=6),
                min_size=1, max_size=4).filter(
                    lambda rows: len({len(r) for r in rows}) == 1))
def test_softmax_rows_sum_to_one(rows):
    x = np.array(rows, dtype=np.float64)
    s = softmax(x).data
    assert np.all(s >= 0)
    assert np.allclose(s.sum(axis=-1), 1.0, atol=1e-9)
    # invariant under per-row shifts
    shifted = softmax(x + 7.5).data
    assert np.allclose(s, shifted, atol=1e-9)
