"""Differentiable ops over NCHW tensors.

Convolution is cross-correlation computed on strided windows; every op writes
its input gradients with per-cell assignments or fixed-order sums, so the
backward pass is deterministic.
"""

import logging
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..errors import BatchTooSmall, ShapeMismatch
from .tensor import Tensor

logger = logging.getLogger(__name__)

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def _require_ndim(x: Tensor, ndim: int, op: str) -> None:
    if x.ndim != ndim:
        raise ShapeMismatch(f"{op} expects a {ndim}-D input, got shape {x.shape}")


# ============================================================================
# Convolution
# ============================================================================


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """NCHW x OIHW cross-correlation with zero padding."""
    _require_ndim(x, 4, "conv2d")
    _require_ndim(weight, 4, "conv2d")
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if c != ci:
        raise ShapeMismatch(f"conv2d input has {c} channels, weight expects {ci}")
    if bias is not None and bias.shape != (o,):
        raise ShapeMismatch(f"conv2d bias shape {bias.shape} != ({o},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeMismatch(f"conv2d kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    data = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        data = data + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor.from_op(np.ascontiguousarray(data), parents, "conv2d")

    def _backward():
        g = out.grad
        if weight.requires_grad:
            weight.accumulate(np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib
            x.accumulate(dxp[:, :, padding:padding + h, padding:padding + w])

    out._backward = _backward
    return out


# ============================================================================
# Normalisation and activations
# ============================================================================


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalisation.

    Training mode normalises with the biased batch variance and updates the
    running stats in place (unbiased variance, momentum 0.1). Eval mode uses
    the running stats.
    """
    _require_ndim(x, 4, "batchnorm2d")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeMismatch(f"batchnorm2d affine params must have shape ({c},)")

    if training:
        if n < 2:
            raise BatchTooSmall(f"batchnorm2d needs batch >= 2 in training mode, got {n}")
        count = n * h * w
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / max(count - 1, 1)
    else:
        mean = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    data = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    out = Tensor.from_op(data, (x, gamma, beta), "batchnorm2d")

    def _backward():
        g = out.grad
        gamma.accumulate((g * xhat).sum(axis=(0, 2, 3)))
        beta.accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        dxhat = g * gamma.data[None, :, None, None]
        if training:
            m = n * h * w
            sum_dxhat = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
            dx = (inv_std[None, :, None, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        else:
            dx = dxhat * inv_std[None, :, None, None]
        x.accumulate(dx)

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor.from_op(np.maximum(x.data, 0.0), (x,), "relu")

    def _backward():
        x.accumulate(out.grad * (x.data > 0))

    out._backward = _backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    out = Tensor.from_op(s, (x,), "sigmoid")

    def _backward():
        x.accumulate(out.grad * s * (1.0 - s))

    out._backward = _backward
    return out


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor.from_op(s, (x,), "softmax")

    def _backward():
        g = out.grad
        x.accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    out._backward = _backward
    return out


# ============================================================================
# Resampling and structure
# ============================================================================


def upsample_nearest2x(x: Tensor) -> Tensor:
    _require_ndim(x, 4, "upsample_nearest2x")
    n, c, h, w = x.shape
    out = Tensor.from_op(x.data.repeat(2, axis=2).repeat(2, axis=3), (x,), "upsample_nearest2x")

    def _backward():
        x.accumulate(out.grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    out._backward = _backward
    return out


def maxpool2x(x: Tensor) -> Tensor:
    """2x2 stride-2 max pool; ties route the gradient to the first cell (row-major)."""
    _require_ndim(x, 4, "maxpool2x")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"maxpool2x needs even spatial dims, got {h}x{w}")
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    data = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    out = Tensor.from_op(data, (x,), "maxpool2x")

    def _backward():
        routed = np.zeros_like(blocks)
        np.put_along_axis(routed, arg[..., None], out.grad[..., None], axis=-1)
        x.accumulate(
            routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        )

    out._backward = _backward
    return out


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ShapeMismatch("concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis):
            raise ShapeMismatch(f"concat shapes {t.shape} and {ref} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    out = Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat")

    def _backward():
        offsets = np.cumsum(sizes)[:-1]
        for t, piece in zip(tensors, np.split(out.grad, offsets, axis=axis)):
            t.accumulate(piece)

    out._backward = _backward
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C)."""
    _require_ndim(x, 4, "global_avg_pool")
    n, c, h, w = x.shape
    out = Tensor.from_op(x.data.mean(axis=(2, 3)), (x,), "global_avg_pool")

    def _backward():
        x.accumulate(np.broadcast_to(out.grad[:, :, None, None] / (h * w), x.shape).copy())

    out._backward = _backward
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """(N, F) @ (O, F)^T + b."""
    _require_ndim(x, 2, "linear")
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise ShapeMismatch(f"linear weight {weight.shape} incompatible with input {x.shape}")
    data = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeMismatch(f"linear bias shape {bias.shape} != ({weight.shape[0]},)")
        data = data + bias.data[None, :]
    parents = (x, weight) if bias is None else (x, weight, bias)
    out = Tensor.from_op(data, parents, "linear")

    def _backward():
        g = out.grad
        x.accumulate(g @ weight.data)
        weight.accumulate(g.T @ x.data)
        if bias is not None:
            bias.accumulate(g.sum(axis=0))

    out._backward = _backward
    return out
