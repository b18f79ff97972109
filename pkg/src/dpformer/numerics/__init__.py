from .finite_diff import check_gradients, finite_diff_grad, relative_error
from .optim import AdamW, AdamWState, adamw_step
from .rng import Rng, Stream, gaussian_init
from .tensor import (Tape, Tensor, add, as_tensor, backward, broadcast_to, clip, concat,
                     div, exp, gelu, getitem, im2col, layer_norm, log, matmul, mean, mul,
                     neg, reshape, softmax, sub, transpose, tsum)

__all__ = [
    "AdamW", "AdamWState", "Rng", "Stream", "Tape", "Tensor", "add", "adamw_step",
    "as_tensor", "backward", "broadcast_to", "check_gradients", "clip", "concat", "div",
    "exp", "finite_diff_grad", "gaussian_init", "gelu", "getitem", "im2col", "layer_norm",
    "log", "matmul", "mean", "mul", "neg", "relative_error", "reshape", "softmax", "sub",
    "transpose", "tsum",
]
