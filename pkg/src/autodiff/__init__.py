"""Reverse-mode autodiff over numpy arrays: ops, layers, losses and Adam."""

from .tensor import Graph, Tensor, constant, no_grad, parameter, set_debug
from .ops import (
    batchnorm2d,
    concat,
    conv2d,
    global_avg_pool,
    linear,
    maxpool2x,
    relu,
    sigmoid,
    softmax,
    upsample_nearest2x,
)
from .losses import cross_entropy, dice_loss, mse_loss
from .layers import BatchNorm2d, Conv2d, ConvBnRelu, DoubleConv, Linear, Module
from .optim import Adam, AdamState, adam_step

__all__ = [
    # Core
    "Tensor",
    "Graph",
    "parameter",
    "constant",
    "no_grad",
    "set_debug",
    # Ops
    "conv2d",
    "batchnorm2d",
    "relu",
    "sigmoid",
    "softmax",
    "upsample_nearest2x",
    "maxpool2x",
    "concat",
    "global_avg_pool",
    "linear",
    # Losses
    "dice_loss",
    "mse_loss",
    "cross_entropy",
    # Layers
    "Module",
    "Conv2d",
    "BatchNorm2d",
    "Linear",
    "ConvBnRelu",
    "DoubleConv",
    # Optimiser
    "Adam",
    "AdamState",
    "adam_step",
]
