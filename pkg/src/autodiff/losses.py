"""Fused loss ops: sigmoid+Dice, mean squared error, softmax cross-entropy."""

import numpy as np
from scipy.special import expit

from ..errors import LabelOutOfRange, ShapeMismatch
from .tensor import Tensor

DICE_SMOOTH = 1.0


def _target_array(target) -> np.ndarray:
    return np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)


def dice_loss(logits: Tensor, target, smooth: float = DICE_SMOOTH) -> Tensor:
    """Batch mean of 1 - (2*sum(p*g) + e) / (sum(p) + sum(g) + e), p = sigmoid(logits).

    Sums run over every non-batch axis of each sample.
    """
    g = _target_array(target)
    if g.shape != logits.shape:
        raise ShapeMismatch(f"dice_loss target shape {g.shape} != logits {logits.shape}")
    n = logits.shape[0]
    axes = tuple(range(1, logits.ndim))
    p = expit(logits.data)
    inter = (p * g).sum(axis=axes)
    denom = p.sum(axis=axes) + g.sum(axis=axes) + smooth
    numer = 2.0 * inter + smooth
    per_sample = 1.0 - numer / denom
    out = Tensor.from_op(np.asarray(per_sample.mean()), (logits,), "dice_loss")

    def _backward():
        shape = (n,) + (1,) * (logits.ndim - 1)
        d_dp = -(2.0 * g * denom.reshape(shape) - numer.reshape(shape)) / (denom.reshape(shape) ** 2)
        logits.accumulate(float(out.grad) / n * d_dp * p * (1.0 - p))

    out._backward = _backward
    return out


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all elements."""
    t = _target_array(target)
    if t.shape != pred.shape:
        raise ShapeMismatch(f"mse_loss target shape {t.shape} != prediction {pred.shape}")
    diff = pred.data - t
    out = Tensor.from_op(np.asarray((diff * diff).mean()), (pred,), "mse_loss")

    def _backward():
        pred.accumulate(float(out.grad) * 2.0 * diff / diff.size)

    out._backward = _backward
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Batch mean of -log softmax(logits)[label]."""
    if logits.ndim != 2:
        raise ShapeMismatch(f"cross_entropy expects (N, K) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, k = logits.shape
    if labels.shape[0] != n:
        raise ShapeMismatch(f"{labels.shape[0]} labels for {n} logit rows")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k}), got {labels.min()}..{labels.max()}")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(n)
    out = Tensor.from_op(np.asarray(-log_probs[rows, labels].mean()), (logits,), "cross_entropy")

    def _backward():
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        logits.accumulate(float(out.grad) * grad / n)

    out._backward = _backward
    return out
