"""Differentiable layer primitives built on the row kernels."""
import numpy as np

from . import kernels
from .tensor import NumericError, ShapeError, Tensor, add, as_tensor, matmul


def softmax_rows(m):
    """Softmax over the last axis with per-row max subtraction."""
    m = as_tensor(m)
    if m.shape[-1] == 0:
        raise ShapeError("softmax over an empty axis")
    if np.isnan(m.data).any():
        raise NumericError("softmax input contains NaN")
    y = kernels.softmax_fwd(m.data)

    def backward(g):
        return (kernels.softmax_bwd(y, g),)

    return Tensor._make(y, (m,), backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    x = as_tensor(x)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: input last dim {d}, gamma {gamma.shape}, beta {beta.shape}")
    if eps < 0:
        raise ValueError("eps must be non-negative")
    out, xhat, rstd = kernels.layernorm_fwd(x.data, gamma.data, beta.data, eps)

    def backward(g):
        gx, gg, gb = kernels.layernorm_bwd(g, xhat, rstd, gamma.data)
        return gx, gg, gb

    return Tensor._make(out, (x, gamma, beta), backward)


def gelu(x):
    x = as_tensor(x)

    def backward(g):
        return (kernels.gelu_bwd(x.data, g),)

    return Tensor._make(kernels.gelu_fwd(x.data), (x,), backward)


def linear(x, W, b=None):
    """Affine map over the last axis: ``x @ W + b``."""
    x = as_tensor(x)
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {W.shape}")
    out = matmul(x, W)
    if b is not None:
        if b.shape != (W.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} does not match weight {W.shape}")
        out = add(out, b)
    return out


def dropout(x, p, rng):
    """Inverted dropout; identity when ``p == 0`` or ``rng`` is None."""
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)

    def backward(g):
        return (g * keep,)

    return Tensor._make(x.data * keep, (x,), backward)


def mse(pred, target):
    """Mean squared error over all entries; differentiable in ``pred``."""
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = diff.size

    def backward(g):
        return (g * (2.0 / n) * diff,)

    return Tensor._make(np.asarray((diff * diff).mean()), (pred,), backward)
