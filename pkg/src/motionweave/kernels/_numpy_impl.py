"""Pure-numpy implementations of the hot kernels.

Shapes follow the compiled extension exactly: all inputs are 2-D row-major
arrays of float32 or float64, one row per independent instance. Masks are
uint8 with 1 = valid; every row must contain at least one valid entry.
"""

import numpy as np

BACKEND = "numpy"


def softmax_fwd(x, mask=None):
    if mask is None:
        m = x.max(axis=1, keepdims=True)
        y = np.exp(x - m)
        y /= y.sum(axis=1, keepdims=True)
        return y
    valid = mask.astype(bool)
    m = np.where(valid, x, -np.inf).max(axis=1, keepdims=True)
    # x - m <= 0 on valid entries; clamp invalid ones so exp cannot overflow
    y = np.exp(np.minimum(x - m, 0.0))
    y[~valid] = 0.0
    y /= y.sum(axis=1, keepdims=True)
    return y


def softmax_bwd(y, dy):
    s = (y * dy).sum(axis=1, keepdims=True)
    return y * (dy - s)


def layernorm_fwd(x, gamma, beta, eps):
    mu = x.mean(axis=1)
    xc = x - mu[:, None]
    var = (xc * xc).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    y = xc * rstd[:, None] * gamma + beta
    return y, mu, rstd


def layernorm_bwd(x, gamma, mu, rstd, dy):
    xhat = (x - mu[:, None]) * rstd[:, None]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    inner = dxhat - dxhat.mean(axis=1, keepdims=True) \
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inner * rstd[:, None]
    return dx, dgamma, dbeta
