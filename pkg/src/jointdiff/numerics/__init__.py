"""Minimal dense-tensor arithmetic with reverse-mode differentiation."""
from .functional import interp_matrix, interp_time, layer_norm, softmax
from .optim import Adam
from .rng import Rng, derive_seed
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    exp,
    is_grad_enabled,
    matmul,
    mean,
    no_grad,
    relu,
    reshape,
    sigmoid,
    silu,
    sqrt,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "Adam",
    "Rng",
    "Tensor",
    "as_tensor",
    "backward",
    "broadcast_to",
    "concat",
    "derive_seed",
    "exp",
    "interp_matrix",
    "interp_time",
    "is_grad_enabled",
    "layer_norm",
    "matmul",
    "mean",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "silu",
    "softmax",
    "sqrt",
    "tanh",
    "transpose",
    "tsum",
]
