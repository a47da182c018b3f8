"""Tensor op conformance against brute-force and finite-difference oracles."""

import numpy as np
import pytest

from nivc.errors import ShapeMismatchError
from nivc.tensor import (
    ConvKernel,
    GradBundle,
    add,
    concat_channels,
    conv2d_backward,
    conv2d_same,
    relu,
    relu_backward,
)


def direct_conv_oracle(x, weights, bias):
    """Brute-force convolution: explicit loops, no shared code with the
    production path."""
    out_ch, in_ch, kh, kw = weights.shape
    _, h, w = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((out_ch, h, w), dtype=np.float64)
    for o in range(out_ch):
        for i in range(h):
            for j in range(w):
                acc = float(bias[o])
                for c in range(in_ch):
                    for u in range(kh):
                        for v in range(kw):
                            src_i, src_j = i + u - ph, j + v - pw
                            if 0 <= src_i < h and 0 <= src_j < w:
                                acc += float(weights[o, c, u, v]) * float(x[c, src_i, src_j])
                out[o, i, j] = acc
    return out


def central_diff(f, arr, eps=1e-3):
    """Central finite differences of scalar f w.r.t. every element of arr."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-4)


def random_case(rng):
    c = int(rng.integers(1, 4))
    h = int(rng.integers(1, 9))
    w = int(rng.integers(1, 9))
    kh, kw = [(1, 1), (1, 3), (3, 1), (3, 3)][int(rng.integers(0, 4))]
    o = int(rng.integers(1, 4))
    x = rng.standard_normal((c, h, w)).astype(np.float32)
    weights = rng.standard_normal((o, c, kh, kw)).astype(np.float32)
    bias = rng.standard_normal(o).astype(np.float32)
    return x, weights, bias


class TestConvForward:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((1, 5, 7)).astype(np.float32)
        k = ConvKernel(np.ones((1, 1, 1, 1), np.float32), np.zeros(1, np.float32))
        assert np.array_equal(conv2d_same(x, k), x)

    def test_bias_only(self):
        x = np.random.default_rng(1).standard_normal((2, 4, 4)).astype(np.float32)
        k = ConvKernel(np.zeros((3, 2, 3, 3), np.float32),
                       np.array([1.5, -2.0, 0.25], np.float32))
        out = conv2d_same(x, k)
        for o, b in enumerate([1.5, -2.0, 0.25]):
            assert np.all(out[o] == np.float32(b))

    def test_matches_direct_oracle_50_cases(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            x, weights, bias = random_case(rng)
            got = conv2d_same(x, ConvKernel(weights, bias))
            want = direct_conv_oracle(x, weights, bias)
            assert got.shape == want.shape
            assert np.max(np.abs(got.astype(np.float64) - want)) <= 1e-6

    def test_shape_mismatch_reports_both_shapes(self):
        x = np.zeros((2, 4, 4), np.float32)
        k = ConvKernel(np.zeros((1, 3, 3, 3), np.float32), np.zeros(1, np.float32))
        with pytest.raises(ShapeMismatchError) as err:
            conv2d_same(x, k)
        assert "(2, 4, 4)" in str(err.value) and "(1, 3, 3, 3)" in str(err.value)

    def test_deterministic_repeat(self):
        rng = np.random.default_rng(5)
        x, weights, bias = random_case(rng)
        k = ConvKernel(weights, bias)
        a = conv2d_same(x, k)
        b = conv2d_same(x, k)
        assert np.array_equal(a, b)

    def test_even_kernel_rejected(self):
        with pytest.raises(ShapeMismatchError):
            ConvKernel(np.zeros((1, 1, 2, 2), np.float32), np.zeros(1, np.float32))


class TestConvBackward:
    def test_zero_grad_out(self):
        rng = np.random.default_rng(2)
        x, weights, bias = random_case(rng)
        k = ConvKernel(weights, bias)
        g = conv2d_backward(x, k, np.zeros((weights.shape[0],) + x.shape[1:], np.float32))
        assert not g.grad_input.any() and not g.grad_weights.any() and not g.grad_bias.any()

    def test_scalar_chain_rule(self):
        # 1x1 kernel on a 1x1x1 input: y = w*x + b
        x = np.array([[[3.0]]])
        w = np.array([[[[2.0]]]])
        b = np.array([0.5])
        g = conv2d_backward(x, ConvKernel(w, b), np.array([[[7.0]]]))
        assert g.grad_weights[0, 0, 0, 0] == 7.0 * 3.0
        assert g.grad_input[0, 0, 0] == 7.0 * 2.0
        assert g.grad_bias[0] == 7.0

    def test_matches_finite_differences_20_cases(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x, weights, bias = random_case(rng)
            x = x.astype(np.float64)
            weights = weights.astype(np.float64)
            bias = bias.astype(np.float64)
            k = ConvKernel(weights, bias)
            g_out = rng.standard_normal((weights.shape[0],) + x.shape[1:])

            def loss():
                return float(np.sum(conv2d_same(x, ConvKernel(weights, bias)) * g_out))

            got = conv2d_backward(x, k, g_out)
            for analytic, arr in ((got.grad_input, x), (got.grad_weights, weights),
                                  (got.grad_bias, bias)):
                numeric = central_diff(loss, arr)
                assert np.max(rel_err(analytic, numeric)) <= 1e-5

    def test_returns_grad_bundle(self):
        x = np.ones((1, 2, 2))
        k = ConvKernel(np.ones((1, 1, 1, 1)), np.zeros(1))
        assert isinstance(conv2d_backward(x, k, np.ones((1, 2, 2))), GradBundle)

    def test_grad_bias_sums_grad_out(self):
        rng = np.random.default_rng(9)
        x, weights, bias = random_case(rng)
        g_out = rng.standard_normal((weights.shape[0],) + x.shape[1:]).astype(np.float32)
        g = conv2d_backward(x, ConvKernel(weights, bias), g_out)
        assert np.allclose(g.grad_bias, g_out.sum(axis=(1, 2)), atol=1e-5)


class TestRelu:
    def test_all_negative(self):
        x = -np.ones((2, 3, 3), np.float32)
        assert not relu(x).any()

    def test_nonnegative_unchanged(self):
        x = np.abs(np.random.default_rng(0).standard_normal((1, 4, 4))).astype(np.float32)
        assert np.array_equal(relu(x), x)

    def test_mixed(self):
        x = np.array([-1.0, 0.0, 2.5], np.float32).reshape(1, 1, 3)
        assert np.array_equal(relu(x).reshape(-1), [0.0, 0.0, 2.5])

    def test_backward_positive_passthrough(self):
        x = np.ones((1, 2, 2), np.float32)
        g = np.random.default_rng(1).standard_normal((1, 2, 2)).astype(np.float32)
        assert np.array_equal(relu_backward(x, g), g)

    def test_backward_negative_zero(self):
        x = -np.ones((1, 2, 2), np.float32)
        g = np.ones((1, 2, 2), np.float32)
        assert not relu_backward(x, g).any()

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 4, 4))
        x[np.abs(x) < 0.05] = 0.1  # keep away from the kink
        g_out = rng.standard_normal((2, 4, 4))

        def loss():
            return float(np.sum(relu(x) * g_out))

        numeric = central_diff(loss, x, eps=1e-5)
        analytic = relu_backward(x, g_out)
        assert np.max(rel_err(analytic, numeric)) <= 1e-5


class TestConcatAdd:
    def test_single_input_identity(self):
        x = np.random.default_rng(0).standard_normal((2, 3, 3)).astype(np.float32)
        assert np.array_equal(concat_channels([x]), x)

    def test_channel_layout(self):
        a = np.full((1, 2, 2), 1, np.float32)
        b = np.full((2, 2, 2), 2, np.float32)
        out = concat_channels([a, b])
        assert out.shape == (3, 2, 2)
        assert np.array_equal(out[:1], a) and np.array_equal(out[1:], b)

    def test_concat_slice_roundtrip(self):
        rng = np.random.default_rng(4)
        xs = [rng.standard_normal((c, 3, 5)).astype(np.float32) for c in (1, 2, 4)]
        out = concat_channels(xs)
        offset = 0
        for x in xs:
            assert np.array_equal(out[offset:offset + x.shape[0]], x)
            offset += x.shape[0]

    def test_mismatched_spatial_raises(self):
        with pytest.raises(ShapeMismatchError):
            concat_channels([np.zeros((1, 2, 2), np.float32), np.zeros((1, 3, 2), np.float32)])

    def test_add_zeros_and_negation(self):
        x = np.random.default_rng(6).standard_normal((2, 3, 3)).astype(np.float32)
        assert np.array_equal(add(x, np.zeros_like(x)), x)
        assert not add(x, -x).any()

    def test_add_commutative_bit_exact(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((3, 4, 4)).astype(np.float32)
        y = rng.standard_normal((3, 4, 4)).astype(np.float32)
        assert np.array_equal(add(x, y), add(y, x))

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            add(np.zeros((1, 2, 2), np.float32), np.zeros((1, 2, 3), np.float32))
