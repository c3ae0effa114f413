"""Dense float64 arithmetic with reverse-mode differentiation."""
from .autodiff import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    backward,
    div,
    exp,
    gelu,
    grad_enabled,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    rotate_pairs,
    softmax,
    softmax_rows,
    sub,
    sum_,
    take_last,
    transpose,
)
from .gradcheck import GradcheckReport, finite_difference_check, relative_error
from .rng import SeededRng, derive_seed
from .serialize import load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes

__all__ = [
    "Parameter", "Tensor", "add", "as_tensor", "backward", "div", "exp", "gelu",
    "grad_enabled", "layer_norm", "log", "log_softmax", "matmul", "mean", "mul",
    "no_grad", "reshape", "rotate_pairs", "softmax", "softmax_rows", "sub", "sum_",
    "take_last", "transpose", "GradcheckReport", "finite_difference_check",
    "relative_error", "SeededRng", "derive_seed", "load_tensor", "save_tensor",
    "tensor_from_bytes", "tensor_to_bytes",
]
