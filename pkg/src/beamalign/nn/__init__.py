"""Micro neural-network engine: autodiff, layers, Adam, checkpoints."""

from .autodiff import (
    GradientError,
    Tensor,
    backward,
    constant,
    cplx_matvec,
    grad_enabled,
    mean_,
    no_grad,
    tile_rows,
)
from .checkpoint import CheckpointError, checkpoint_load, checkpoint_save, load_into_store
from .cplx import (
    NormalizationError,
    c_abs2,
    c_inner,
    c_mul,
    to_complex,
    to_pairs,
    unit_modulus,
    unit_norm,
)
from .layers import BatchNorm, DenseStack, LstmParams, LstmState, glorot, lstm_step
from .optim import OptimError, ParameterStore, adam_step

__all__ = [
    "Tensor",
    "GradientError",
    "no_grad",
    "grad_enabled",
    "constant",
    "backward",
    "mean_",
    "tile_rows",
    "cplx_matvec",
    "NormalizationError",
    "to_pairs",
    "to_complex",
    "c_mul",
    "c_inner",
    "c_abs2",
    "unit_norm",
    "unit_modulus",
    "BatchNorm",
    "DenseStack",
    "LstmParams",
    "LstmState",
    "lstm_step",
    "glorot",
    "ParameterStore",
    "OptimError",
    "adam_step",
    "CheckpointError",
    "checkpoint_save",
    "checkpoint_load",
    "load_into_store",
]
