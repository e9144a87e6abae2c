"""Minimal layer toolkit with manual backpropagation."""

from .core import Module, Param, Sequential
from .gradcheck import check_module_gradients, numerical_gradient, relative_error
from .layers import (
    BatchNorm2d,
    BiLSTM,
    BiLstmReadout,
    Conv2d,
    Dense,
    Dropout,
    GlobalAvgPool2d,
    MaxPool2d,
    ReLU,
    ResidualBlock,
    conv2d_backward,
    conv2d_forward,
)
from .losses import log_softmax, one_hot, softmax, softmax_cross_entropy

__all__ = [
    "BatchNorm2d", "BiLSTM", "BiLstmReadout", "Conv2d", "Dense", "Dropout", "GlobalAvgPool2d",
    "MaxPool2d", "Module", "Param", "ReLU", "ResidualBlock", "Sequential", "check_module_gradients",
    "conv2d_backward", "conv2d_forward", "log_softmax", "numerical_gradient", "one_hot",
    "relative_error", "softmax", "softmax_cross_entropy",
]
