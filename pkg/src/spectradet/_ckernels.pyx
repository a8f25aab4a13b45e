# cython: language_level=3
"""Compiled im2col/col2im kernels for single-sample 2D convolution."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
           Py_ssize_t stride, Py_ssize_t pad):
    """Unfold ``x`` (C, H, W) into columns of shape (C*kh*kw, OH*OW)."""
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t OH = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((C * kh * kw, OH * OW), dtype=np.float64)
    cdef double[:, ::1] cols = out
    cdef Py_ssize_t c, di, dj, oi, oj, i, j, row
    with nogil:
        for c in range(C):
            for di in range(kh):
                for dj in range(kw):
                    row = (c * kh + di) * kw + dj
                    for oi in range(OH):
                        i = oi * stride + di - pad
                        if i < 0 or i >= H:
                            continue
                        for oj in range(OW):
                            j = oj * stride + dj - pad
                            if j >= 0 and j < W:
                                cols[row, oi * OW + oj] = x[c, i, j]
    return out


def col2im(const double[:, ::1] cols, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride, Py_ssize_t pad):
    """Adjoint of :func:`im2col`: scatter-add columns back to (C, H, W)."""
    cdef Py_ssize_t OH = (H + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t OW = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((C, H, W), dtype=np.float64)
    cdef double[:, :, ::1] x = out
    cdef Py_ssize_t c, di, dj, oi, oj, i, j, row
    with nogil:
        for c in range(C):
            for di in range(kh):
                for dj in range(kw):
                    row = (c * kh + di) * kw + dj
                    for oi in range(OH):
                        i = oi * stride + di - pad
                        if i < 0 or i >= H:
                            continue
                        for oj in range(OW):
                            j = oj * stride + dj - pad
                            if j >= 0 and j < W:
                                x[c, i, j] += cols[row, oi * OW + oj]
    return out
