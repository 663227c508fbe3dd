"""Minimal reverse-mode autodiff for 1-D convolutional networks."""

from .gradcheck import directional_check, gradcheck
from .ops import (
    add,
    concat,
    conv1d,
    deep_supervision_loss,
    dense,
    downsample_max,
    dropout,
    l2_norm,
    leaky_relu,
    mean_of,
    mse,
    nmse_l2_loss,
    reshape,
    scale,
    upsample_dup,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

__all__ = [
    "Tensor",
    "Adam",
    "AdamState",
    "adam_step",
    "add",
    "concat",
    "conv1d",
    "deep_supervision_loss",
    "dense",
    "directional_check",
    "downsample_max",
    "dropout",
    "gradcheck",
    "l2_norm",
    "leaky_relu",
    "mean_of",
    "mse",
    "nmse_l2_loss",
    "reshape",
    "scale",
    "upsample_dup",
]
