# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row kernels; same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, expf, sqrt, erf

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865476
cdef double INV_SQRT_2PI = 0.3989422804014327


def softmax_fwd(floating[:, ::1] x):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] out = out_arr
    cdef floating m, e
    cdef double s
    with nogil:
        for r in range(rows):
            m = x[r, 0]
            for c in range(1, cols):
                if x[r, c] > m:
                    m = x[r, c]
            s = 0.0
            for c in range(cols):
                # single precision rows use expf; libm's double exp is several times slower
                if floating is float:
                    e = expf(x[r, c] - m)
                else:
                    e = exp(x[r, c] - m)
                out[r, c] = e
                s += e
            m = <floating>(1.0 / s)
            for c in range(cols):
                out[r, c] = out[r, c] * m
    return out_arr


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] gy):
    cdef Py_ssize_t r, c, rows = y.shape[0], cols = y.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.asarray(y).dtype)
    cdef floating[:, ::1] out = out_arr
    cdef double dot
    with nogil:
        for r in range(rows):
            dot = 0.0
            for c in range(cols):
                dot += gy[r, c] * y[r, c]
            for c in range(cols):
                out[r, c] = <floating>(y[r, c] * (gy[r, c] - dot))
    return out_arr


def layernorm_fwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    dtype = np.asarray(x).dtype
    out_arr = np.empty((rows, cols), dtype=dtype)
    xhat_arr = np.empty((rows, cols), dtype=dtype)
    rstd_arr = np.empty(rows, dtype=dtype)
    cdef floating[:, ::1] out = out_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef floating[::1] rstd = rstd_arr
    cdef double mean, var, d, inv
    with nogil:
        for r in range(rows):
            mean = 0.0
            for c in range(cols):
                mean += x[r, c]
            mean /= cols
            var = 0.0
            for c in range(cols):
                d = x[r, c] - mean
                var += d * d
            var /= cols
            inv = 1.0 / sqrt(var + eps)
            rstd[r] = <floating>inv
            for c in range(cols):
                d = (x[r, c] - mean) * inv
                xhat[r, c] = <floating>d
                out[r, c] = <floating>(d * gamma[c] + beta[c])
    return out_arr, xhat_arr, rstd_arr


def layernorm_bwd(floating[:, ::1] gy, floating[:, ::1] xhat, floating[::1] rstd, floating[::1] gamma):
    cdef Py_ssize_t r, c, rows = gy.shape[0], cols = gy.shape[1]
    dtype = np.asarray(gy).dtype
    gx_arr = np.empty((rows, cols), dtype=dtype)
    gg_arr = np.zeros(cols, dtype=np.float64)
    gb_arr = np.zeros(cols, dtype=np.float64)
    cdef floating[:, ::1] gx = gx_arr
    cdef double[::1] gg = gg_arr
    cdef double[::1] gb = gb_arr
    cdef double m1, m2, g
    with nogil:
        for r in range(rows):
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                g = gy[r, c] * gamma[c]
                m1 += g
                m2 += g * xhat[r, c]
                gg[c] += gy[r, c] * xhat[r, c]
                gb[c] += gy[r, c]
            m1 /= cols
            m2 /= cols
            for c in range(cols):
                g = gy[r, c] * gamma[c]
                gx[r, c] = <floating>((g - m1 - xhat[r, c] * m2) * rstd[r])
    return gx_arr, gg_arr.astype(dtype, copy=False), gb_arr.astype(dtype, copy=False)


def gelu_fwd(floating[:, ::1] x):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] out = out_arr
    cdef double v
    with nogil:
        for r in range(rows):
            for c in range(cols):
                v = x[r, c]
                out[r, c] = <floating>(0.5 * v * (1.0 + erf(v * INV_SQRT2)))
    return out_arr


def gelu_bwd(floating[:, ::1] x, floating[:, ::1] gy):
    cdef Py_ssize_t r, c, rows = x.shape[0], cols = x.shape[1]
    out_arr = np.empty((rows, cols), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] out = out_arr
    cdef double v, cdf, pdf
    with nogil:
        for r in range(rows):
            for c in range(cols):
                v = x[r, c]
                cdf = 0.5 * (1.0 + erf(v * INV_SQRT2))
                pdf = INV_SQRT_2PI * exp(-0.5 * v * v)
                out[r, c] = <floating>(gy[r, c] * (cdf + v * pdf))
    return out_arr


def pcc_profile(double[::1] base, double[:, ::1] candidates, double tol=1e-12):
    cdef Py_ssize_t k, t, n = base.shape[0], rows = candidates.shape[0]
    out_arr = np.zeros(rows, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double mb = 0.0, sb = 0.0, mc, sc, cov, db, dc, v
    with nogil:
        for t in range(n):
            mb += base[t]
        mb /= n
        for t in range(n):
            db = base[t] - mb
            sb += db * db
        sb = sqrt(sb / n)
        if sb >= tol:
            for k in range(rows):
                mc = 0.0
                for t in range(n):
                    mc += candidates[k, t]
                mc /= n
                sc = 0.0
                cov = 0.0
                for t in range(n):
                    dc = candidates[k, t] - mc
                    sc += dc * dc
                    cov += dc * (base[t] - mb)
                sc = sqrt(sc / n)
                if sc >= tol:
                    v = (cov / n) / (sb * sc)
                    if v > 1.0:
                        v = 1.0
                    elif v < -1.0:
                        v = -1.0
                    out[k] = v
    return out_arr
