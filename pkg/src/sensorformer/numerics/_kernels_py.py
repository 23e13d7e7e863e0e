"""Pure-numpy row kernels.

Reference implementations of the fused kernels in ``_kernels.pyx``. All
functions take 2-D C-contiguous arrays whose rows are independent vectors.
"""
import numpy as np
from scipy.special import erf

_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


def softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    out = np.exp(shifted)
    out /= out.sum(axis=1, keepdims=True)
    return out


def softmax_bwd(y, gy):
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x, gamma, beta, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    return xhat * gamma + beta, xhat, rstd[:, 0]


def layernorm_bwd(gy, xhat, rstd, gamma):
    d = xhat.shape[1]
    ggamma = (gy * xhat).sum(axis=0)
    gbeta = gy.sum(axis=0)
    gxhat = gy * gamma
    m1 = gxhat.sum(axis=1, keepdims=True)
    m2 = (gxhat * xhat).sum(axis=1, keepdims=True)
    gx = (gxhat - m1 / d - xhat * (m2 / d)) * rstd[:, None]
    return gx, ggamma, gbeta


def gelu_fwd(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_bwd(x, gy):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return gy * (cdf + x * pdf)


def pcc_profile(base, candidates, tol=1e-12):
    """Pearson coefficient of ``base`` against every row of ``candidates``.

    Rows (or a base) with standard deviation below ``tol`` get coefficient 0.
    """
    b = base - base.mean()
    c = candidates - candidates.mean(axis=1, keepdims=True)
    n = base.shape[0]
    sb = np.sqrt((b * b).sum() / n)
    sc = np.sqrt((c * c).sum(axis=1) / n)
    cov = (c @ b) / n
    out = np.zeros(candidates.shape[0], dtype=np.float64)
    if sb < tol:
        return out
    ok = sc >= tol
    out[ok] = cov[ok] / (sb * sc[ok])
    return np.clip(out, -1.0, 1.0)
