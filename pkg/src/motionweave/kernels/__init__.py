"""Kernel backend selection.

The transformer inner loops (softmax over attention logits, layer norm,
GELU) run either through the compiled Cython extension or through the
pure-numpy fallback. Selection happens once at import:

* ``MOTIONWEAVE_KERNELS=compiled`` — require the extension, fail if missing
* ``MOTIONWEAVE_KERNELS=numpy``    — force the fallback
* unset or ``auto``                — prefer compiled, fall back silently

Both backends implement the same functions with identical shape contracts;
``benchmarks/bench_kernels.py`` compares their throughput.
"""

import os

import numpy as np

from . import _numpy_impl

_choice = os.environ.get("MOTIONWEAVE_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise RuntimeError(
        f"MOTIONWEAVE_KERNELS must be auto, compiled or numpy, got {_choice!r}"
    )

if _choice == "numpy":
    _impl = _numpy_impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError(
                "MOTIONWEAVE_KERNELS=compiled but the extension is not built; "
                "reinstall without MOTIONWEAVE_PURE_PYTHON=1"
            )
        _impl = _numpy_impl

softmax_fwd = _impl.softmax_fwd
softmax_bwd = _impl.softmax_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd


def backend() -> str:
    """Name of the active kernel backend ("compiled" or "numpy")."""
    return _impl.BACKEND


# GELU stays numpy-vectorized in every backend: SIMD transcendentals beat a
# scalar C loop by an order of magnitude; the forward caches tanh(u) so the
# backward never recomputes it.
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu_fwd(x):
    u = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), t


def gelu_bwd(x, t, dy):
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
