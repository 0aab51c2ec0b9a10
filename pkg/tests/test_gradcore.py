"""Autodiff core: forward examples against independent oracles, reverse
mode against central finite differences."""

import numpy as np
import pytest

from lookupvnet import gradcore
from lookupvnet.gradcore import (
    ShapeMismatchError,
    Tensor,
    add,
    backward,
    conv2d,
    dense,
    finite_diff_grad,
    max_pool2d,
    max_rel_error,
    mul,
    relu,
    reshape,
    softmax_cross_entropy,
    sum_all,
)


def naive_conv2d(x, w, stride=1, padding=0):
    """Triple-loop cross-correlation oracle, no cleverness."""
    n, c, h, width = x.shape
    j, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - k) // stride + 1
    wo = (width + 2 * padding - k) // stride + 1
    out = np.zeros((n, j, ho, wo))
    for ni in range(n):
        for ji in range(j):
            for hi in range(ho):
                for wi in range(wo):
                    patch = xp[ni, :, hi * stride : hi * stride + k, wi * stride : wi * stride + k]
                    out[ni, ji, hi, wi] = (patch * w[ji]).sum()
    return out


def naive_dense(x, w, b):
    n, d = x.shape
    _, k = w.shape
    out = np.zeros((n, k))
    for ni in range(n):
        for ki in range(k):
            acc = 0.0
            for di in range(d):
                acc += x[ni, di] * w[di, ki]
            out[ni, ki] = acc + b[ki]
    return out


def naive_log_softmax_loss(z, labels):
    total = 0.0
    for i, label in enumerate(labels):
        total += -np.log(np.exp(z[i, label]) / np.exp(z[i]).sum())
    return total / len(labels)


class TestConv2d:
    def test_identity_kernel(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        out = conv2d(x, w)
        assert np.array_equal(out.data, np.ones((1, 1, 3, 3)))

    def test_hand_computed_dot(self):
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 1, 2, 2))
        w = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]).reshape(1, 1, 2, 2))
        out = conv2d(x, w)
        assert out.data.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 5.0

    def test_zero_kernel_any_padding(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(size=(2, 3, 5, 4)))
        w = Tensor(np.zeros((4, 3, 3, 3)))
        out = conv2d(x, w, stride=1, padding=2)
        assert out.data.shape == (2, 4, 7, 6)
        assert np.all(out.data == 0.0)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 0), (2, 1)])
    def test_matches_naive_oracle(self, stride, padding):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 3, 6, 5))
        w = rng.normal(size=(4, 3, 3, 3))
        got = conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding).data
        want = naive_conv2d(x, w, stride=stride, padding=padding)
        assert np.allclose(got, want, atol=1e-12)

    def test_shape_mismatch_names_both_shapes(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Tensor(np.zeros((1, 3, 3, 3)))
        with pytest.raises(ShapeMismatchError, match=r"\(1, 2, 4, 4\).*\(1, 3, 3, 3\)"):
            conv2d(x, w)

    def test_empty_output_rejected(self):
        with pytest.raises(ShapeMismatchError, match="empty"):
            conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))))

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)

        def loss_fn():
            out = conv2d(x, w, stride=2, padding=1)
            return sum_all(mul(out, out))

        grads = backward(loss_fn())
        for param in (x, w):
            assert max_rel_error(grads[param], finite_diff_grad(loss_fn, param)) < 1e-6


class TestDense:
    def test_identity(self):
        x = np.arange(6, dtype=float).reshape(2, 3)
        out = dense(Tensor(x), Tensor(np.eye(3)), Tensor(np.zeros(3)))
        assert np.array_equal(out.data, x)

    def test_sum_weights(self):
        out = dense(Tensor([[1.0, 2.0]]), Tensor([[1.0], [1.0]]), Tensor([0.0]))
        assert out.data.tolist() == [[3.0]]

    def test_matches_naive_matmul(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(3, 4))
        b = rng.normal(size=4)
        got = dense(Tensor(x), Tensor(w), Tensor(b)).data
        assert np.allclose(got, naive_dense(x, w, b), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            dense(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))), Tensor(np.zeros(2)))

    def test_gradients_vs_finite_differences(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)

        def loss_fn():
            return sum_all(relu(dense(x, w, b)))

        grads = backward(loss_fn())
        for param in (x, w, b):
            assert max_rel_error(grads[param], finite_diff_grad(loss_fn, param)) < 1e-6


class TestPoolAndRelu:
    def test_pool_picks_window_max(self):
        x = np.arange(16, dtype=float).reshape(1, 1, 4, 4)
        out = max_pool2d(Tensor(x))
        assert out.data.reshape(2, 2).tolist() == [[5.0, 7.0], [13.0, 15.0]]

    def test_pool_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.normal(size=(2, 2, 6, 6)), requires_grad=True)

        def loss_fn():
            return sum_all(mul(max_pool2d(x), max_pool2d(x)))

        grads = backward(loss_fn())
        assert max_rel_error(grads[x], finite_diff_grad(loss_fn, x)) < 1e-6

    def test_relu_zeroes_negatives(self):
        out = relu(Tensor([-1.0, 0.0, 2.0]))
        assert out.data.tolist() == [0.0, 0.0, 2.0]


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        logits = Tensor(np.zeros((3, 10)))
        loss = softmax_cross_entropy(logits, np.array([0, 5, 9]))
        assert abs(float(loss.data) - np.log(10)) < 1e-12

    def test_saturated_case(self):
        loss = softmax_cross_entropy(Tensor([[30.0, -30.0]]), np.array([0]))
        assert float(loss.data) < 1e-12

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(17)
        z = rng.normal(size=(4, 5))
        labels = rng.integers(0, 5, size=4)
        got = float(softmax_cross_entropy(Tensor(z), labels).data)
        assert abs(got - naive_log_softmax_loss(z, labels)) < 1e-10

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label out of range"):
            softmax_cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(19)
        z = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
        labels = rng.integers(0, 5, size=4)

        def loss_fn():
            return softmax_cross_entropy(z, labels)

        grads = backward(loss_fn())
        assert max_rel_error(grads[z], finite_diff_grad(loss_fn, z)) < 1e-6


class TestBackward:
    def test_sum_gives_ones(self):
        p = Tensor(np.arange(6, dtype=float).reshape(2, 3), requires_grad=True)
        grads = backward(sum_all(p))
        assert np.array_equal(grads[p], np.ones((2, 3)))

    def test_quadratic_gives_two_p(self):
        p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
        grads = backward(sum_all(mul(p, p)))
        assert np.allclose(grads[p], 2 * p.data)

    def test_non_scalar_root_rejected(self):
        p = Tensor(np.ones((2, 2)), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(add(p, p))

    def test_accumulation_matches_two_single_use_graphs(self):
        rng = np.random.default_rng(23)
        values = rng.normal(size=(3, 3))
        shared = Tensor(values.copy(), requires_grad=True)
        twice = backward(sum_all(mul(shared, shared)))[shared]

        a = Tensor(values.copy(), requires_grad=True)
        b = Tensor(values.copy(), requires_grad=True)
        left = backward(sum_all(mul(a, Tensor(values))))[a]
        right = backward(sum_all(mul(Tensor(values), b)))[b]
        assert np.allclose(twice, left + right)

    def test_unreachable_leaf_absent(self):
        used = Tensor(np.ones(3), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        grads = backward(sum_all(used))
        assert used in grads and unused not in grads

    def test_deterministic_forward_backward(self):
        def run():
            rng = np.random.default_rng(29)
            x = Tensor(rng.normal(size=(2, 3, 8, 8)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 3, 3, 3)), requires_grad=True)
            out = relu(conv2d(x, w, padding=1))
            loss = sum_all(mul(out, out))
            grads = backward(loss)
            return float(loss.data), grads[w].copy()

        loss_a, grad_a = run()
        loss_b, grad_b = run()
        assert loss_a == loss_b
        assert np.array_equal(grad_a, grad_b)


class TestFiniteDiff:
    def test_quadratic_slope(self):
        theta = Tensor(np.array([3.0]), requires_grad=True)
        grad = finite_diff_grad(lambda: sum_all(mul(theta, theta)), theta, h=1e-5)
        assert abs(grad[0] - 6.0) < 1e-6

    def test_constant_gives_zero(self):
        theta = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        constant = Tensor(np.array(4.0))
        grad = finite_diff_grad(lambda: constant, theta)
        assert np.array_equal(grad, np.zeros(2))

    def test_step_must_be_positive(self):
        theta = Tensor(np.array([1.0]))
        with pytest.raises(ValueError):
            finite_diff_grad(lambda: sum_all(theta), theta, h=0.0)


class TestEndToEndGradient:
    def test_network_loss_on_small_batch(self):
        """Composite graph: conv/relu/pool/dense/loss vs finite differences."""
        rng = np.random.default_rng(31)
        x = Tensor(rng.normal(size=(4, 3, 6, 6)), requires_grad=True)
        w_conv = Tensor(rng.normal(size=(4, 3, 3, 3)) * 0.5, requires_grad=True)
        w_fc = Tensor(rng.normal(size=(16, 3)) * 0.5, requires_grad=True)
        b_fc = Tensor(np.zeros(3), requires_grad=True)
        labels = rng.integers(0, 3, size=4)

        def loss_fn():
            h = max_pool2d(relu(conv2d(x, w_conv)))
            h = reshape(h, (4, -1))
            return softmax_cross_entropy(dense(h, w_fc, b_fc), labels)

        grads = backward(loss_fn())
        for param in (x, w_conv, w_fc, b_fc):
            err = max_rel_error(grads[param], finite_diff_grad(loss_fn, param, h=1e-5))
            assert err < 1e-4


class TestFlopCounter:
    def test_conv_count_follows_convention(self):
        x = Tensor(np.zeros((1, 3, 8, 8)))
        w = Tensor(np.zeros((4, 3, 3, 3)))
        with gradcore.count_flops() as counter:
            conv2d(x, w)
        positions = 6 * 6
        assert counter.flops == positions * 4 * (2 * 9 * 3 + 1)

    def test_counter_inactive_outside_context(self):
        with gradcore.count_flops() as counter:
            pass
        conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.zeros((1, 1, 1, 1))))
        assert counter.flops == 0
