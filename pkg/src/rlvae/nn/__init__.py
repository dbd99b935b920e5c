"""Minimal float32 tensor stack: tape autodiff, layers, Adam, checkpoints."""

from rlvae.nn.checkpoint import CheckpointError, FORMAT_VERSION
from rlvae.nn.gradcheck import GradCheckReport, grad_check
from rlvae.nn.optim import AdamState, EpsSchedule, ExpSchedule, LrSchedule, adam_step, huber_value
from rlvae.nn.params import Params, glorot, gru_cell, init_gru, init_linear, linear
from rlvae.nn.tensor import Tensor

__all__ = [
    "AdamState", "CheckpointError", "EpsSchedule", "ExpSchedule", "FORMAT_VERSION", "GradCheckReport",
    "LrSchedule", "Params", "Tensor", "adam_step", "glorot", "grad_check", "gru_cell", "huber_value",
    "init_gru", "init_linear", "linear",
]
