"""Minimal reverse-mode autodiff on numpy, with Adam and a gradient checker."""
from .engine import (
    ShapeError,
    Tensor,
    add,
    concat,
    getitem,
    layer_norm,
    matmul,
    max_,
    mean,
    min_,
    mul,
    no_grad,
    pairwise_sqdist,
    relu,
    reshape,
    softmax,
    sq_err_sum,
    sub,
    sum_,
    swapaxes,
    transpose,
)
from .gradcheck import grad_check, numeric_grad, rel_error
from .nn import ConfigError, Params, multi_head_attention, transformer_layer
from .optim import AdamState, TrainingDivergence, adam_step

__all__ = [
    "AdamState", "ConfigError", "Params", "ShapeError", "Tensor", "TrainingDivergence",
    "adam_step", "add", "concat", "getitem", "grad_check", "layer_norm", "matmul", "max_",
    "mean", "min_", "mul", "multi_head_attention", "no_grad", "numeric_grad",
    "pairwise_sqdist", "rel_error", "relu", "reshape", "softmax", "sq_err_sum", "sub", "sum_",
    "swapaxes", "transformer_layer", "transpose",
]
