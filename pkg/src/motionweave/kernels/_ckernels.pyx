# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: masked softmax and layer norm.

Each function mirrors the numpy fallback in ``_numpy_impl`` bit-for-bit in
shape contracts: 2-D row-major float32/float64 inputs, one row per instance.
"""

import numpy as np

from libc.math cimport exp, expf, sqrt, sqrtf, tanh, tanhf

ctypedef fused floating:
    float
    double


cdef inline floating _exp(floating x) noexcept nogil:
    if floating is float:
        return expf(x)
    else:
        return exp(x)


cdef inline floating _tanh(floating x) noexcept nogil:
    if floating is float:
        return tanhf(x)
    else:
        return tanh(x)


cdef inline floating _rsqrt(floating x) noexcept nogil:
    if floating is float:
        return <float>1.0 / sqrtf(x)
    else:
        return 1.0 / sqrt(x)

BACKEND = "compiled"

def softmax_fwd(floating[:, ::1] x, unsigned char[:, ::1] mask=None):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    cdef floating m, s, v
    if floating is float:
        out = np.empty((r, c), dtype=np.float32)
    else:
        out = np.empty((r, c), dtype=np.float64)
    cdef floating[:, ::1] y = out
    if mask is None:
        for i in range(r):
            m = x[i, 0]
            for j in range(1, c):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(c):
                v = _exp(x[i, j] - m)
                y[i, j] = v
                s += v
            for j in range(c):
                y[i, j] /= s
    else:
        for i in range(r):
            m = 0.0
            s = 0.0  # reused as "seen a valid entry" flag before the sum pass
            for j in range(c):
                if mask[i, j] and (s == 0.0 or x[i, j] > m):
                    m = x[i, j]
                    s = 1.0
            s = 0.0
            for j in range(c):
                if mask[i, j]:
                    v = _exp(x[i, j] - m)
                    y[i, j] = v
                    s += v
                else:
                    y[i, j] = 0.0
            for j in range(c):
                y[i, j] /= s
    return out


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] dy):
    cdef Py_ssize_t r = y.shape[0], c = y.shape[1], i, j
    cdef floating s
    if floating is float:
        out = np.empty((r, c), dtype=np.float32)
    else:
        out = np.empty((r, c), dtype=np.float64)
    cdef floating[:, ::1] dx = out
    for i in range(r):
        s = 0.0
        for j in range(c):
            s += y[i, j] * dy[i, j]
        for j in range(c):
            dx[i, j] = y[i, j] * (dy[i, j] - s)
    return out


def layernorm_fwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta,
                  double eps):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    cdef floating mu, var, rs, d
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    out = np.empty((r, c), dtype=dt)
    mu_out = np.empty(r, dtype=dt)
    rstd_out = np.empty(r, dtype=dt)
    cdef floating[:, ::1] y = out
    cdef floating[::1] mu_v = mu_out, rstd_v = rstd_out
    for i in range(r):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        rs = _rsqrt(var + <floating>eps)
        for j in range(c):
            y[i, j] = (x[i, j] - mu) * rs * gamma[j] + beta[j]
        mu_v[i] = mu
        rstd_v[i] = rs
    return out, mu_out, rstd_out


def layernorm_bwd(floating[:, ::1] x, floating[::1] gamma, floating[::1] mu,
                  floating[::1] rstd, floating[:, ::1] dy):
    cdef Py_ssize_t r = x.shape[0], c = x.shape[1], i, j
    cdef floating xhat, dxh, m1, m2
    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    dx_out = np.empty((r, c), dtype=dt)
    dgamma_out = np.zeros(c, dtype=dt)
    dbeta_out = np.zeros(c, dtype=dt)
    cdef floating[:, ::1] dx = dx_out
    cdef floating[::1] dgamma = dgamma_out, dbeta = dbeta_out
    for i in range(r):
        m1 = 0.0
        m2 = 0.0
        for j in range(c):
            xhat = (x[i, j] - mu[i]) * rstd[i]
            dxh = dy[i, j] * gamma[j]
            m1 += dxh
            m2 += dxh * xhat
            dgamma[j] += dy[i, j] * xhat
            dbeta[j] += dy[i, j]
        m1 /= c
        m2 /= c
        for j in range(c):
            xhat = (x[i, j] - mu[i]) * rstd[i]
            dxh = dy[i, j] * gamma[j]
            dx[i, j] = (dxh - m1 - xhat * m2) * rstd[i]
    return dx_out, dgamma_out, dbeta_out
