"""Dense tensor arithmetic on (channels, height, width) float arrays.

Forward and backward convolution, ReLU, channel concatenation and addition.
Everything is a pure function of its inputs and runs through one canonical
numpy path, so repeated calls are bit-identical.  float32 is the production
dtype; passing float64 arrays switches the whole computation to the 64-bit
shadow path used for gradient checking.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericalError, ShapeMismatchError

ALLOWED_KERNEL_SIZES = (1, 3, 5, 7, 9)


def _check_chw(x, name="tensor"):
    if not (isinstance(x, np.ndarray) and x.ndim == 3):
        raise ShapeMismatchError(f"{name} must be a rank-3 (c, h, w) array, got {getattr(x, 'shape', type(x))}")


def _check_finite(x, what):
    if not np.isfinite(x).all():
        raise NumericalError(f"{what} contains non-finite values")
    return x


@dataclass(frozen=True)
class ConvKernel:
    """2-D convolution weights [out_ch, in_ch, k_h, k_w] plus per-channel bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeMismatchError(f"kernel weights must be rank 4, got {self.weights.shape}")
        out_ch, _, kh, kw = self.weights.shape
        if kh not in ALLOWED_KERNEL_SIZES or kw not in ALLOWED_KERNEL_SIZES:
            raise ShapeMismatchError(f"kernel size {kh}x{kw} not supported (each side must be odd, <= 9)")
        if self.bias.shape != (out_ch,):
            raise ShapeMismatchError(f"bias shape {self.bias.shape} does not match out_ch={out_ch}")
        _check_finite(self.weights, "kernel weights")
        _check_finite(self.bias, "kernel bias")

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def parameter_count(self):
        return self.weights.size + self.bias.size


@dataclass(frozen=True)
class GradBundle:
    """Gradients of a convolution: w.r.t. its input, weights and bias."""

    grad_input: np.ndarray
    grad_weights: np.ndarray
    grad_bias: np.ndarray


def _pad_same(x, kh, kw):
    c, h, w = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.zeros((c, h + kh - 1, w + kw - 1), dtype=x.dtype)
    xp[:, ph:ph + h, pw:pw + w] = x
    return xp, ph, pw


def _im2col(xp, kh, kw, h, w):
    # windows[c, i, j, u, v] == xp[c, i+u, j+v]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return win.transpose(0, 3, 4, 1, 2).reshape(xp.shape[0] * kh * kw, h * w)


def conv2d_same(x, k):
    """Stride-1 "same" convolution with zero padding; output keeps h and w.

    Accumulation happens in float64 regardless of storage dtype, so the
    result is the correctly rounded sum at output precision and identical
    between encoder and decoder.
    """
    _check_chw(x)
    if x.shape[0] != k.in_channels:
        raise ShapeMismatchError(
            f"input has {x.shape[0]} channels but kernel expects {k.in_channels} "
            f"(input {x.shape}, weights {k.weights.shape})")
    _, h, w = x.shape
    out_ch, _, kh, kw = k.weights.shape
    xp, _, _ = _pad_same(x.astype(np.float64, copy=False), kh, kw)
    cols = _im2col(xp, kh, kw, h, w)
    w2 = k.weights.reshape(out_ch, -1).astype(np.float64, copy=False)
    out = w2 @ cols + k.bias.astype(np.float64, copy=False)[:, None]
    dtype = np.result_type(x.dtype, k.weights.dtype)
    return _check_finite(out.reshape(out_ch, h, w).astype(dtype, copy=False), "conv2d_same output")


def conv2d_backward(x, k, grad_out):
    """Gradients of conv2d_same(x, k) given the loss gradient at its output."""
    _check_chw(x)
    _check_chw(grad_out, "grad_out")
    out_ch, in_ch, kh, kw = k.weights.shape
    _, h, w = x.shape
    if x.shape[0] != in_ch or grad_out.shape != (out_ch, h, w):
        raise ShapeMismatchError(
            f"inconsistent backward shapes: input {x.shape}, weights {k.weights.shape}, "
            f"grad_out {grad_out.shape}")
    dtype = np.result_type(x.dtype, k.weights.dtype, grad_out.dtype)
    xp, ph, pw = _pad_same(x.astype(dtype, copy=False), kh, kw)
    cols = _im2col(xp, kh, kw, h, w)
    g2 = grad_out.reshape(out_ch, h * w).astype(dtype, copy=False)
    w2 = k.weights.reshape(out_ch, -1).astype(dtype, copy=False)

    grad_bias = g2.sum(axis=1)
    grad_weights = (g2 @ cols.T).reshape(out_ch, in_ch, kh, kw)
    gcols = (w2.T @ g2).reshape(in_ch, kh, kw, h, w)
    gxp = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            gxp[:, u:u + h, v:v + w] += gcols[:, u, v]
    grad_input = gxp[:, ph:ph + h, pw:pw + w]
    _check_finite(grad_weights, "conv2d_backward grad_weights")
    return GradBundle(grad_input=grad_input, grad_weights=grad_weights, grad_bias=grad_bias)


def relu(x):
    _check_chw(x)
    return np.maximum(x, 0)


def relu_backward(x, grad_out):
    """Pass grad_out where x > 0; subgradient 0 at exactly 0."""
    if x.shape != grad_out.shape:
        raise ShapeMismatchError(f"relu_backward shapes differ: {x.shape} vs {grad_out.shape}")
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


def concat_channels(xs):
    """Stack tensors along the channel axis, in argument order."""
    if not xs:
        raise ShapeMismatchError("concat_channels needs at least one tensor")
    for x in xs:
        _check_chw(x)
    hw = {x.shape[1:] for x in xs}
    if len(hw) != 1:
        raise ShapeMismatchError(f"concat_channels spatial sizes differ: {sorted(hw)}")
    return np.concatenate(xs, axis=0)


def add(x, y):
    if x.shape != y.shape:
        raise ShapeMismatchError(f"add shapes differ: {x.shape} vs {y.shape}")
    return _check_finite(x + y, "add output")
