"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np


def finite_difference(loss_fn, params, eps=1e-5):
    """Numeric gradient of ``loss_fn()`` w.r.t. each Tensor in ``params``.

    loss_fn must be a pure function of the current param values and return a
    python float. Perturbs every element with a centered step.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            h = eps * max(1.0, abs(orig))
            flat[i] = orig + h
            hi = loss_fn()
            flat[i] = orig - h
            lo = loss_fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-4):
    """Worst-case elementwise relative error between gradient sets.

    The floor bounds the denominator: gradients below it (including exact
    zeros, whose finite differences only carry rounding noise) are compared
    absolutely at floor scale.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check_gradients(build_loss, params, eps=1e-5, floor=1e-4):
    """Run backward once and compare against finite differences.

    ``build_loss`` constructs the scalar loss Tensor from live params.
    Returns the worst relative error across parameters.
    """
    for p in params:
        p.grad = None
    loss = build_loss()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    numeric = finite_difference(lambda: float(build_loss().data), params, eps)
    return max_relative_error(analytic, numeric, floor)
