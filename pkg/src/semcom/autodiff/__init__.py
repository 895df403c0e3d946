"""Minimal reverse-mode automatic differentiation over numpy arrays."""

from . import ops
from .gradcheck import check_parameter_gradients, finite_diff_check
from .layers import (RunningStats, avg_pool2d, batch_norm, conv2d, dense,
                     depthwise_conv2d, depthwise_separable_conv2d, global_avg_pool, max_pool2d,
                     pool, upsample_nearest)
from .ops import activation, concat, cross_entropy, mse, place, relu, sigmoid, softplus, take, tanh
from .optim import Adam, AdamState, NonFiniteGradientError, adam_step
from .tensor import (ContractError, DiffTensor, DimensionError, Tape, active_tape, as_tensor,
                     backward, parameter)

__all__ = [
    "Adam", "AdamState", "ContractError", "DiffTensor", "DimensionError", "NonFiniteGradientError",
    "RunningStats", "Tape", "activation", "active_tape", "adam_step", "as_tensor", "avg_pool2d",
    "backward", "batch_norm", "check_parameter_gradients", "concat", "conv2d", "cross_entropy",
    "dense", "depthwise_conv2d", "depthwise_separable_conv2d", "finite_diff_check",
    "global_avg_pool", "max_pool2d", "mse", "ops", "parameter", "place", "pool", "relu",
    "sigmoid", "softplus", "take", "tanh", "upsample_nearest",
]
