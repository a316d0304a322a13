"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from .gradcheck import grad_check, numeric_grad, relative_error
from .optim import AdamW, OptimizerState, adamw_step, cosine_lr
from .tensor import (
    NonFiniteError,
    Tensor,
    add,
    backward,
    elementwise,
    gelu,
    layer_norm,
    matmul,
    mse,
    mul,
    relu,
    reshape,
    scale,
    softmax,
    softmax_cross_entropy,
    sub,
    take,
    tensor_new,
    transpose,
)

__all__ = [
    "AdamW", "NonFiniteError", "OptimizerState", "Tensor", "adamw_step", "add", "backward",
    "cosine_lr", "elementwise", "gelu", "grad_check", "layer_norm", "matmul", "mse", "mul",
    "numeric_grad", "relative_error", "relu", "reshape", "scale", "softmax",
    "softmax_cross_entropy", "sub", "take", "tensor_new", "transpose",
]
