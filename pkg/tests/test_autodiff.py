"""Tensor core: forward semantics, gradients vs finite differences, tape rules."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linesg import autodiff as ad
from linesg.autodiff import Tensor, backward, record
from linesg.oracles import finite_difference_check


def tensor64(values, requires_grad=True):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


class TestMatmul:
    def test_identity(self):
        a = np.arange(9, dtype=np.float32).reshape(3, 3)
        out = ad.matmul(Tensor(np.eye(3, dtype=np.float32)), Tensor(a))
        np.testing.assert_array_equal(out.data, a)

    def test_hand_arithmetic(self):
        out = ad.matmul(Tensor([[1., 2.], [3., 4.]]), Tensor([[1.], [1.]]))
        np.testing.assert_array_equal(out.data, [[3.], [7.]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_grad_of_sum_is_ones_bt(self):
        rng = np.random.default_rng(0)
        a = tensor64(rng.normal(size=(5, 4)))
        b = tensor64(rng.normal(size=(4, 3)), requires_grad=False)
        with record():
            backward(ad.reduce_sum(ad.matmul(a, b)))
        np.testing.assert_allclose(a.grad, np.ones((5, 3)) @ b.data.T, atol=1e-12)

    def test_finite_difference(self):
        rng = np.random.default_rng(1)
        a = tensor64(rng.normal(size=(5, 4)))
        b = tensor64(rng.normal(size=(4, 3)))
        err = finite_difference_check(lambda: ad.reduce_sum(ad.matmul(a, b)), [a, b], h=1e-3)
        assert err <= 1e-4


class TestSoftmax:
    def test_symmetry(self):
        out = ad.softmax(Tensor([0.0, 0.0]))
        np.testing.assert_allclose(out.data, [0.5, 0.5], atol=1e-7)

    @pytest.mark.parametrize("x", [0.0, -3.5, 100.0, 1e4])
    def test_shift_invariance(self, x):
        out = ad.softmax(Tensor([x, x, x]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-6)

    def test_reference_values(self):
        # 64-bit reference: exp([1,2,3]) / sum
        out = ad.softmax(tensor64([1.0, 2.0, 3.0], requires_grad=False))
        expected = [0.09003057317038046, 0.24472847105479767, 0.6652409557748219]
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    def test_empty_axis_is_error(self):
        with pytest.raises(ValueError):
            ad.softmax(Tensor(np.zeros((2, 0))))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=60, deadline=None)
    def test_sums_to_one(self, values):
        out = ad.softmax(Tensor(np.asarray(values, dtype=np.float32)))
        assert abs(out.data.sum() - 1.0) <= 1e-6


class TestLayerNorm:
    def test_constant_vector_is_zero(self):
        out = ad.layer_norm(Tensor([4.0, 4.0, 4.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, np.zeros(3), atol=1e-6)

    def test_zero_gain_gives_bias(self):
        bias = Tensor([1.0, -2.0, 0.5])
        out = ad.layer_norm(Tensor([3.0, 1.0, -7.0]), Tensor(np.zeros(3)), bias)
        np.testing.assert_allclose(out.data, bias.data, atol=1e-7)

    def test_closed_form(self):
        out = ad.layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, [-1.2247, 0.0, 1.2247], atol=1e-3)

    def test_finite_difference(self):
        rng = np.random.default_rng(2)
        x = tensor64(rng.normal(size=(4, 6)))
        gain = tensor64(rng.normal(size=6))
        bias = tensor64(rng.normal(size=6))
        w = tensor64(rng.normal(size=(4, 6)), requires_grad=False)
        err = finite_difference_check(
            lambda: ad.reduce_sum(ad.layer_norm(x, gain, bias) * w), [x, gain, bias], h=1e-4)
        assert err <= 1e-4


class TestBackwardContract:
    def test_sum_gradient_is_ones(self):
        p = tensor64([[1.0, 2.0], [3.0, 4.0]])
        with record():
            backward(ad.reduce_sum(p))
        np.testing.assert_array_equal(p.grad, np.ones((2, 2)))

    def test_square_gradient_is_2p(self):
        p = tensor64([1.0, -2.0, 3.0])
        with record():
            backward(ad.reduce_sum(p * p))
        np.testing.assert_allclose(p.grad, 2 * p.data, atol=1e-12)

    def test_backward_without_recording(self):
        p = tensor64([1.0])
        with pytest.raises(RuntimeError):
            backward(ad.reduce_sum(p))

    def test_non_scalar_loss(self):
        p = tensor64([1.0, 2.0])
        with record():
            with pytest.raises(ValueError):
                backward(p * p)

    def test_tape_consumed(self):
        p = tensor64([1.0, 2.0])
        with record():
            loss = ad.reduce_sum(p * p)
            backward(loss)
            with pytest.raises(RuntimeError):
                backward(loss)

    def test_gradient_accumulates_for_shared_input(self):
        p = tensor64([2.0])
        with record():
            backward(ad.reduce_sum(p * p + p))
        np.testing.assert_allclose(p.grad, [5.0])


class TestElementwiseAndReductions:
    def test_finite_difference_suite(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(20):
            x = tensor64(rng.normal(size=(3, 5)) * 2)
            x.data[np.abs(x.data) < 0.05] += 0.1  # keep relu away from its kink
            y = tensor64(rng.normal(size=(3, 5)) * 2)
            w = tensor64(rng.normal(size=(3, 5)), requires_grad=False)
            v = tensor64(rng.normal(size=5), requires_grad=False)
            cases = [
                (lambda: ad.reduce_sum((x + y) * w), [x, y]),
                (lambda: ad.reduce_sum((x - y) * w), [x, y]),
                (lambda: ad.reduce_sum(x * y * w), [x, y]),
                (lambda: ad.reduce_sum(x / (y * y + 1.0) * w), [x, y]),
                (lambda: ad.reduce_sum(ad.relu(x) * w), [x]),
                (lambda: ad.reduce_sum(ad.sigmoid(x) * w), [x]),
                (lambda: ad.reduce_sum(ad.tanh(x) * w), [x]),
                (lambda: ad.reduce_sum(ad.exp(x * 0.3) * w), [x]),
                (lambda: ad.reduce_sum(ad.log(x * x + 1.0) * w), [x]),
                (lambda: ad.reduce_sum(ad.concat([x, y], axis=1) * ad.concat([w, w], axis=1)), [x, y]),
                (lambda: ad.reduce_sum(ad.reduce_mean(x * w, axis=0) * v), [x]),
            ]
            for build, leaves in cases:
                def scalar():
                    out = build()
                    return out if out.data.ndim == 0 else ad.reduce_sum(out)
                worst = max(worst, finite_difference_check(scalar, leaves, h=1e-4))
        assert worst <= 1e-4

    def test_forward_nan_raises(self):
        with np.errstate(all="ignore"):
            with pytest.raises(FloatingPointError):
                ad.log(Tensor([-1.0]))
            with pytest.raises(FloatingPointError):
                ad.div(Tensor([1.0]), Tensor([0.0]))


class TestGatherScatter:
    def test_gather_rows(self):
        x = Tensor(np.arange(12, dtype=np.float32).reshape(4, 3))
        out = ad.gather(x, np.array([2, 0, 2]))
        np.testing.assert_array_equal(out.data, x.data[[2, 0, 2]])

    def test_scatter_add_matches_loop(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n, rows = int(rng.integers(1, 40)), int(rng.integers(1, 9))
            data = rng.normal(size=(n, 3))
            idx = rng.integers(0, rows, size=n)
            out = ad.scatter_add(Tensor(data, dtype=np.float64), idx, rows)
            want = np.zeros((rows, 3))
            for i in range(n):
                want[idx[i]] += data[i]
            np.testing.assert_allclose(out.data, want, atol=1e-12)

    @given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_scatter_add_property(self, n, rows, seed):
        rng = np.random.default_rng(seed)
        data = rng.normal(size=(n, 2))
        idx = rng.integers(0, rows, size=n)
        out = ad.scatter_add(Tensor(data, dtype=np.float64), idx, rows)
        want = np.zeros((rows, 2))
        for i in range(n):
            want[idx[i]] += data[i]
        np.testing.assert_allclose(out.data, want, atol=1e-12)

    def test_gather_scatter_gradients(self):
        rng = np.random.default_rng(5)
        x = tensor64(rng.normal(size=(4, 3)))
        idx = np.array([0, 3, 3, 1, 0, 0])
        seg = np.array([1, 0, 1, 1, 0, 1])
        err = finite_difference_check(
            lambda: ad.reduce_sum(ad.power(ad.scatter_add(ad.gather(x, idx), seg, 2), 2.0)),
            [x], h=1e-4)
        assert err <= 1e-4

    def test_pick_gradient(self):
        rng = np.random.default_rng(6)
        x = tensor64(rng.uniform(0.2, 0.9, size=(5, 4)))
        idx = np.array([0, 3, 1, 1, 2])
        err = finite_difference_check(
            lambda: ad.reduce_sum(-ad.log(ad.pick(x, idx))), [x], h=1e-4)
        assert err <= 1e-4


class TestDeterminism:
    def test_bitwise_identical_forward_backward(self):
        def run():
            rng = np.random.default_rng(7)
            x = Tensor(rng.normal(size=(6, 8)).astype(np.float32), requires_grad=True)
            w = Tensor(rng.normal(size=(8, 4)).astype(np.float32), requires_grad=True)
            with record():
                out = ad.softmax(ad.matmul(ad.relu(x), w), axis=-1)
                loss = ad.reduce_sum(out * out)
                backward(loss)
            return loss.data.copy(), x.grad.copy(), w.grad.copy()

        first, second = run(), run()
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
