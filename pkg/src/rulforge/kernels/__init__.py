"""Kernel backend selection.

The compiled Cython extension is preferred when it built; otherwise the
numpy implementations take over with identical contracts. Set
RULFORGE_KERNELS=numpy or RULFORGE_KERNELS=compiled to force one side
(forcing the extension when it is missing is an error).
"""

import os

import numpy as np

from ..errors import ConfigError
from . import numpy_backend

try:
    from . import _ckernels as _compiled
except ImportError:
    _compiled = None

_requested = os.environ.get("RULFORGE_KERNELS", "").strip().lower()
if _requested not in ("", "numpy", "compiled"):
    raise ConfigError(
        f"RULFORGE_KERNELS must be 'numpy' or 'compiled', got {_requested!r}"
    )
if _requested == "compiled" and _compiled is None:
    raise ConfigError("RULFORGE_KERNELS=compiled but the extension is not built")

if _requested == "numpy" or _compiled is None:
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    _impl = _compiled
    BACKEND = "compiled"


def available_backends() -> dict:
    """Importable backends by name; always contains 'numpy'."""
    found = {"numpy": numpy_backend}
    if _compiled is not None:
        found["compiled"] = _compiled
    return found


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv1d_forward(x, w, b):
    return np.asarray(_impl.conv1d_forward(_f64(x), _f64(w), _f64(b)))


def conv1d_backward(x, w, grad_out):
    gx, gw, gb = _impl.conv1d_backward(_f64(x), _f64(w), _f64(grad_out))
    return np.asarray(gx), np.asarray(gw), np.asarray(gb)


def maxpool1d_forward(x, pool):
    out, idx = _impl.maxpool1d_forward(_f64(x), pool)
    return np.asarray(out), np.asarray(idx)


def maxpool1d_backward(idx, grad_out, length, pool):
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return np.asarray(_impl.maxpool1d_backward(idx, _f64(grad_out), length, pool))
