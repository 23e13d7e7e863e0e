"""Row-kernel backend selection.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. ``SENSORFORMER_KERNELS`` forces a choice:
``compiled``, ``python`` or ``auto`` (default).

In ``auto`` mode softmax_fwd stays on numpy even when the compiled module is
present: numpy's vectorised exp beats the scalar libm loop on long rows.
"""
import logging
import os

import numpy as np

from . import _kernels_py

logger = logging.getLogger(__name__)

_choice = os.environ.get("SENSORFORMER_KERNELS", "auto").lower()
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"SENSORFORMER_KERNELS must be auto, compiled or python, got {_choice!r}")

_compiled = None
if _choice != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:
        if _choice == "compiled":
            raise
        logger.debug("compiled kernels unavailable, using numpy fallback")

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"
_softmax_fwd_impl = _kernels_py if _choice == "auto" else _impl


def available_backends():
    return ("compiled", "python") if _compiled is not None else ("python",)


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels were not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def _rows(a):
    a = np.ascontiguousarray(a)
    return a.reshape(-1, a.shape[-1])


def softmax_fwd(x):
    return _softmax_fwd_impl.softmax_fwd(_rows(x)).reshape(x.shape)


def softmax_bwd(y, gy):
    return _impl.softmax_bwd(_rows(y), _rows(gy.astype(y.dtype, copy=False))).reshape(y.shape)


def layernorm_fwd(x, gamma, beta, eps):
    dt = x.dtype
    out, xhat, rstd = _impl.layernorm_fwd(
        _rows(x),
        np.ascontiguousarray(gamma, dtype=dt),
        np.ascontiguousarray(beta, dtype=dt),
        float(eps),
    )
    return out.reshape(x.shape), xhat.reshape(x.shape), rstd


def layernorm_bwd(gy, xhat, rstd, gamma):
    dt = xhat.dtype
    gx, gg, gb = _impl.layernorm_bwd(
        _rows(gy.astype(dt, copy=False)), _rows(xhat), np.ascontiguousarray(rstd, dtype=dt),
        np.ascontiguousarray(gamma, dtype=dt),
    )
    return gx.reshape(xhat.shape), gg, gb


def gelu_fwd(x):
    return _impl.gelu_fwd(_rows(x)).reshape(x.shape)


def gelu_bwd(x, gy):
    return _impl.gelu_bwd(_rows(x), _rows(gy.astype(x.dtype, copy=False))).reshape(x.shape)


def pcc_profile(base, candidates, tol=1e-12):
    base = np.ascontiguousarray(base, dtype=np.float64)
    candidates = np.ascontiguousarray(candidates, dtype=np.float64)
    return _impl.pcc_profile(base, candidates, tol)
