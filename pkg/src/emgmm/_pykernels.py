"""Pure numpy versions of the compiled kernels.

Work is split into fixed-size row chunks; per-chunk sums use numpy's
pairwise reduction and chunks are combined in index order, so output is
deterministic but not bit-identical to the compiled backend.
"""

import numpy as np

CHUNK = 8192


def _chunk_weights(x, centers, log_weights):
    diff = x[:, None, :] - centers[None, :, :]
    scores = log_weights[None, :] - 0.5 * np.einsum("nmd,nmd->nm", diff, diff)
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    return w


def _check(points, centers, log_weights):
    if points.ndim != 2 or centers.ndim != 2 or points.shape[1] != centers.shape[1]:
        raise ValueError("shape mismatch")
    if log_weights.shape != (centers.shape[0],):
        raise ValueError("shape mismatch")


def accumulate(points, centers, log_weights):
    """Return ``(mass, wsum)``: per-component sums of w_i(X_j) and w_i(X_j) X_j."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    log_weights = np.ascontiguousarray(log_weights, dtype=np.float64)
    _check(points, centers, log_weights)
    M, d = centers.shape
    mass = np.zeros(M)
    wsum = np.zeros((M, d))
    for start in range(0, points.shape[0], CHUNK):
        x = points[start:start + CHUNK]
        w = _chunk_weights(x, centers, log_weights)
        mass += w.sum(axis=0)
        wsum += np.einsum("nm,nd->md", w, x)
    return mass, wsum


def responsibilities(points, centers, log_weights):
    """Return the (n, M) posterior weight matrix."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    log_weights = np.ascontiguousarray(log_weights, dtype=np.float64)
    _check(points, centers, log_weights)
    out = np.empty((points.shape[0], centers.shape[0]))
    for start in range(0, points.shape[0], CHUNK):
        out[start:start + CHUNK] = _chunk_weights(points[start:start + CHUNK], centers, log_weights)
    return out
