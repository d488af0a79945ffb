"""Backend selection for the E-step kernels.

The compiled extension is used when it imports; set ``EMGMM_PURE_PYTHON=1``
to force the numpy implementation.
"""

import os

import numpy as np

from . import _pykernels as python_impl

try:
    if os.environ.get("EMGMM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as compiled_impl
except ImportError:
    compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "cython" if compiled_impl is not None else "python"


def _prep(points, centers, log_weights):
    return (
        np.ascontiguousarray(points, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.float64),
        np.ascontiguousarray(log_weights, dtype=np.float64),
    )


def accumulate(points, centers, log_weights):
    """Sums of posterior weights and weighted points per component.

    Args:
        points: (n, d) observations.
        centers: (M, d) current centers.
        log_weights: (M,) log mixing weights.

    Returns:
        ``(mass, wsum)`` with ``mass[i] = sum_j w_i(X_j)`` and
        ``wsum[i] = sum_j w_i(X_j) X_j``.
    """
    return _impl.accumulate(*_prep(points, centers, log_weights))


def responsibilities(points, centers, log_weights):
    """(n, M) matrix of posterior weights, rows summing to 1."""
    return _impl.responsibilities(*_prep(points, centers, log_weights))
