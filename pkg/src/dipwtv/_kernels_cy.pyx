# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel field kernels.

Same contract as ``_kernels_py``: float64 C-contiguous arrays, gradient
fields shaped (H, W, C, 2) with component 0 horizontal and 1 vertical.
The loops fuse the norm/threshold/scale passes that the numpy twin spreads
over temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def grad_field(cnp.float64_t[:, :, ::1] u):
    cdef Py_ssize_t h = u.shape[0], w = u.shape[1], c = u.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] out = np.zeros((h, w, c, 2))
    cdef cnp.float64_t[:, :, :, ::1] o = out
    cdef Py_ssize_t i, j, k
    for i in range(h):
        for j in range(w):
            for k in range(c):
                if j < w - 1:
                    o[i, j, k, 0] = u[i, j + 1, k] - u[i, j, k]
                if i < h - 1:
                    o[i, j, k, 1] = u[i + 1, j, k] - u[i, j, k]
    return out


def divergence(cnp.float64_t[:, :, :, ::1] p):
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], c = p.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] out = np.zeros((h, w, c))
    cdef cnp.float64_t[:, :, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(h):
        for j in range(w):
            for k in range(c):
                acc = 0.0
                if j < w - 1:
                    acc += p[i, j, k, 0]
                if j > 0:
                    acc -= p[i, j - 1, k, 0]
                if i < h - 1:
                    acc += p[i, j, k, 1]
                if i > 0:
                    acc -= p[i - 1, j, k, 1]
                o[i, j, k] = acc
    return out


def pointwise_magnitude(cnp.float64_t[:, :, :, ::1] p):
    cdef Py_ssize_t h = p.shape[0], w = p.shape[1], c = p.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((h, w))
    cdef cnp.float64_t[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(c):
                acc += p[i, j, k, 0] * p[i, j, k, 0]
                acc += p[i, j, k, 1] * p[i, j, k, 1]
            o[i, j] = sqrt(acc)
    return out


def group_shrink_field(cnp.float64_t[:, :, :, ::1] w, cnp.float64_t[:, ::1] tau):
    cdef Py_ssize_t h = w.shape[0], ww = w.shape[1], c = w.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] out = np.zeros((h, ww, c, 2))
    cdef cnp.float64_t[:, :, :, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, mag, scale
    for i in range(h):
        for j in range(ww):
            acc = 0.0
            for k in range(c):
                acc += w[i, j, k, 0] * w[i, j, k, 0]
                acc += w[i, j, k, 1] * w[i, j, k, 1]
            if acc == 0.0:
                continue
            mag = sqrt(acc)
            scale = mag - tau[i, j]
            if scale <= 0.0:
                continue
            scale = scale / mag
            for k in range(c):
                o[i, j, k, 0] = w[i, j, k, 0] * scale
                o[i, j, k, 1] = w[i, j, k, 1] * scale
    return out
