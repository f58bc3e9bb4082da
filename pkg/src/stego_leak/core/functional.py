"""
Pure numpy kernels for the ops the stego networks need.

Each op comes as a forward/backward pair working on plain ``numpy.ndarray``
values. The autograd ``Tensor`` in :mod:`stego_leak.core.tensor` wraps these;
tests call them directly against finite differences.

Images are channel-first ``[C, H, W]`` arrays. Convolutions run with stride 1
and "same" padding, so the spatial size never changes.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

Padding = Tuple[int, int, int, int]

# probabilities fed to log() are kept inside this band
BCE_CLAMP = 1e-7


def same_padding(kernel_size: int) -> Padding:
    """
    Padding (top, bottom, left, right) that keeps H x W under stride 1.

    Even kernels pad floor((k-1)/2) before and ceil((k-1)/2) after.

    Args:
        kernel_size: Square kernel size k >= 1

    Returns:
        Tuple of (top, bottom, left, right)
    """
    if kernel_size < 1:
        raise ShapeError("kernel size", ">= 1", (kernel_size,))
    before = (kernel_size - 1) // 2
    after = kernel_size - 1 - before
    return before, after, before, after


def _check_conv_shapes(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, padding: Padding) -> None:
    if x.ndim != 3:
        raise ShapeError("conv2d input rank", (3,), (x.ndim,))
    if kernels.ndim != 4 or kernels.shape[2] != kernels.shape[3]:
        raise ShapeError("conv2d kernels [C_out, C_in, k, k]", "square 4-d kernel", kernels.shape)
    c_out, c_in, k, _ = kernels.shape
    if x.shape[0] != c_in:
        raise ShapeError("conv2d input channels", (c_in,), (x.shape[0],))
    if bias.shape != (c_out,):
        raise ShapeError("conv2d bias", (c_out,), bias.shape)
    if x.shape[1] < k or x.shape[2] < k:
        raise ShapeError("conv2d spatial dims (H, W >= k)", (k, k), x.shape[1:])
    top, bottom, left, right = padding
    if top + bottom != k - 1 or left + right != k - 1:
        raise ShapeError("conv2d padding totals", (k - 1, k - 1), (top + bottom, left + right))


def _pad(x: np.ndarray, padding: Padding) -> np.ndarray:
    top, bottom, left, right = padding
    return np.pad(x, ((0, 0), (top, bottom), (left, right)), mode="constant")


def conv2d_forward(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, padding: Padding) -> np.ndarray:
    """
    Stride-1 same-padded 2D convolution (cross-correlation).

    out[c, y, x] = bias[c] + sum_{i, dy, dx} kernels[c, i, dy, dx] * padded[i, y + dy, x + dx]

    Args:
        x: Input of shape [C_in, H, W]
        kernels: Weights of shape [C_out, C_in, k, k]
        bias: Bias of shape [C_out]
        padding: (top, bottom, left, right), totals k-1 per axis

    Returns:
        Output of shape [C_out, H, W]
    """
    _check_conv_shapes(x, kernels, bias, padding)
    k = kernels.shape[2]
    windows = sliding_window_view(_pad(x, padding), (k, k), axis=(1, 2))  # [C_in, H, W, k, k]
    out = np.tensordot(kernels, windows, axes=([1, 2, 3], [0, 3, 4]))
    out += bias[:, None, None]
    return out


def conv2d_backward(
    x: np.ndarray,
    kernels: np.ndarray,
    bias: np.ndarray,
    padding: Padding,
    upstream: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of :func:`conv2d_forward` with respect to its three inputs.

    Args:
        x: Forward input [C_in, H, W]
        kernels: Forward kernels [C_out, C_in, k, k]
        bias: Forward bias [C_out]
        padding: Forward padding
        upstream: dL/d(out), shape [C_out, H, W]

    Returns:
        Tuple of (grad_input, grad_kernels, grad_bias)
    """
    _check_conv_shapes(x, kernels, bias, padding)
    c_out, c_in, k, _ = kernels.shape
    _, height, width = x.shape
    if upstream.shape != (c_out, height, width):
        raise ShapeError("conv2d upstream gradient", (c_out, height, width), upstream.shape)

    windows = sliding_window_view(_pad(x, padding), (k, k), axis=(1, 2))
    grad_kernels = np.tensordot(upstream, windows, axes=([1, 2], [1, 2]))  # [C_out, C_in, k, k]
    grad_bias = upstream.sum(axis=(1, 2))

    top, _, left, _ = padding
    grad_padded = np.zeros((c_in, height + k - 1, width + k - 1), dtype=upstream.dtype)
    for dy in range(k):
        for dx in range(k):
            grad_padded[:, dy:dy + height, dx:dx + width] += np.tensordot(
                kernels[:, :, dy, dx], upstream, axes=([0], [0])
            )
    grad_input = grad_padded[:, top:top + height, left:left + width]
    return np.ascontiguousarray(grad_input), grad_kernels, grad_bias


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Pass the upstream gradient where x > 0; x == 0 passes zero."""
    return np.where(x > 0, upstream, 0.0).astype(upstream.dtype, copy=False)


def sigmoid_forward(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function; never evaluates exp of a large positive value."""
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    z = np.exp(x[~positive])
    out[~positive] = z / (1.0 + z)
    return out


def sigmoid_backward(output: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Backward of sigmoid expressed through its forward output."""
    return upstream * output * (1.0 - output)


def concat_channels_forward(inputs: Sequence[np.ndarray]) -> np.ndarray:
    """Stack [C_i, H, W] inputs along the channel axis, in argument order."""
    if not inputs:
        raise ShapeError("concat_channels inputs", "at least one tensor", "none")
    spatial = inputs[0].shape[1:]
    for arr in inputs:
        if arr.ndim != 3 or arr.shape[1:] != spatial:
            raise ShapeError("concat_channels spatial dims", spatial, arr.shape[1:])
    return np.concatenate(inputs, axis=0)


def concat_channels_backward(channel_counts: Sequence[int], upstream: np.ndarray) -> List[np.ndarray]:
    """Split the upstream gradient back into per-input slices."""
    if sum(channel_counts) != upstream.shape[0]:
        raise ShapeError("concat_channels upstream channels", (sum(channel_counts),), (upstream.shape[0],))
    boundaries = np.cumsum(channel_counts)[:-1]
    return np.split(upstream, boundaries, axis=0)


def clamp_probabilities(p: np.ndarray) -> np.ndarray:
    return np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
