"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``NOMORE_DISABLE_NUMBA=1``
to force the numpy path; it is also used when numba cannot be imported.
Both backend modules stay importable on their own so tests and the
benchmark can compare them side by side.
"""

import os

from . import _numpy


def _select():
    if os.environ.get("NOMORE_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return _numpy
    try:
        from . import _numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        return _numpy
    return _numba


backend = _select()
BACKEND = backend.NAME

gaussian_fill = backend.gaussian_fill
affine_noise_forward = backend.affine_noise_forward
affine_noise_backward = backend.affine_noise_backward
bn_train_forward = backend.bn_train_forward
bn_eval_forward = backend.bn_eval_forward
bn_backward = backend.bn_backward
im2col = backend.im2col
col2im = backend.col2im
pairwise_differences = backend.pairwise_differences

__all__ = [
    "BACKEND",
    "affine_noise_backward",
    "affine_noise_forward",
    "bn_backward",
    "bn_eval_forward",
    "bn_train_forward",
    "col2im",
    "gaussian_fill",
    "im2col",
    "pairwise_differences",
]
