"""Minimal tensor substrate: reverse-mode autograd, layer primitives, Adam."""
from . import kernels
from .gradcheck import finite_diff_check
from .ops import dropout, gelu, layer_norm, linear, mse, softmax_rows
from .optim import AdamState, adam_step
from .tensor import (
    ContractError,
    NumericError,
    Parameter,
    ShapeError,
    Tensor,
    add,
    allocations,
    as_tensor,
    broadcast_to,
    count_macs,
    getitem,
    mac_label,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    square,
    sub,
    transpose,
    tsum,
)


def backward(loss):
    """Populate ``.grad`` of every trainable leaf that ``loss`` depends on."""
    loss.backward()


def init_uniform(rng, shape, fan_in, name, dtype="float64"):
    """Parameter drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = (1.0 / fan_in) ** 0.5
    return Parameter(rng.uniform(-bound, bound, size=shape).astype(dtype), name=name)


__all__ = [
    "AdamState", "ContractError", "NumericError", "Parameter", "ShapeError", "Tensor",
    "adam_step", "add", "allocations", "as_tensor", "backward", "broadcast_to", "count_macs",
    "dropout", "finite_diff_check", "gelu", "getitem", "init_uniform", "kernels", "layer_norm",
    "linear", "mac_label", "matmul", "mean", "mse", "mul", "no_grad", "reshape",
    "softmax_rows", "square", "sub", "transpose", "tsum",
]
