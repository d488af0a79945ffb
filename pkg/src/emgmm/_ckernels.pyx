# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled E-step kernels.

Points are visited in index order and accumulated sequentially, so the
result for a given input is bit-reproducible.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline void _point_weights(const double[:, ::1] points, Py_ssize_t j,
                                const double[:, ::1] centers,
                                const double[::1] log_weights,
                                double* w) noexcept nogil:
    cdef Py_ssize_t M = centers.shape[0]
    cdef Py_ssize_t d = centers.shape[1]
    cdef Py_ssize_t i, k
    cdef double diff, sq, top, total
    top = -1e308
    for i in range(M):
        sq = 0.0
        for k in range(d):
            diff = points[j, k] - centers[i, k]
            sq += diff * diff
        w[i] = log_weights[i] - 0.5 * sq
        if w[i] > top:
            top = w[i]
    total = 0.0
    for i in range(M):
        w[i] = exp(w[i] - top)
        total += w[i]
    for i in range(M):
        w[i] /= total


def accumulate(const double[:, ::1] points, const double[:, ::1] centers,
               const double[::1] log_weights):
    """Return ``(mass, wsum)``: per-component sums of w_i(X_j) and w_i(X_j) X_j."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t M = centers.shape[0]
    if centers.shape[1] != d or log_weights.shape[0] != M:
        raise ValueError("shape mismatch")
    mass_arr = np.zeros(M, dtype=np.float64)
    wsum_arr = np.zeros((M, d), dtype=np.float64)
    cdef double[::1] mass = mass_arr
    cdef double[:, ::1] wsum = wsum_arr
    cdef double* w = <double*> malloc(M * sizeof(double))
    if w == NULL:
        raise MemoryError()
    cdef Py_ssize_t i, j, k
    try:
        with nogil:
            for j in range(n):
                _point_weights(points, j, centers, log_weights, w)
                for i in range(M):
                    mass[i] += w[i]
                    for k in range(d):
                        wsum[i, k] += w[i] * points[j, k]
    finally:
        free(w)
    return mass_arr, wsum_arr


def responsibilities(const double[:, ::1] points, const double[:, ::1] centers,
                     const double[::1] log_weights):
    """Return the (n, M) posterior weight matrix."""
    cdef Py_ssize_t n = points.shape[0]
    cdef Py_ssize_t d = points.shape[1]
    cdef Py_ssize_t M = centers.shape[0]
    if centers.shape[1] != d or log_weights.shape[0] != M:
        raise ValueError("shape mismatch")
    out_arr = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            _point_weights(points, j, centers, log_weights, &out[j, 0])
    return out_arr
