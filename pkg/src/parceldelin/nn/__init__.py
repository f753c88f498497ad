"""Minimal dense tensor engine with reverse-mode autodiff for U-Net layers."""

from .engine import Tensor, Parameter, Tape, backward, record_op, active_tape
from .ops import (
    conv2d,
    maxpool2x,
    upsample_nearest2x,
    relu,
    sigmoid,
    concat_channels,
    batchnorm2d,
    RunningStats,
    add,
    tensor_sum,
)
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "backward",
    "record_op",
    "active_tape",
    "conv2d",
    "maxpool2x",
    "upsample_nearest2x",
    "relu",
    "sigmoid",
    "concat_channels",
    "batchnorm2d",
    "RunningStats",
    "add",
    "tensor_sum",
    "grad_check",
]
