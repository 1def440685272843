# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the loops in _kernels_py (same layouts, same sum order)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h - k + 1, wo = w - k + 1
    cdef Py_ssize_t ncol = c * k * k
    out_arr = np.empty((n * ho * wo, ncol))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b_, ch, a, b, i, j, row, col
    with nogil:
        for b_ in range(n):
            for i in range(ho):
                for j in range(wo):
                    row = (b_ * ho + i) * wo + j
                    col = 0
                    for ch in range(c):
                        for a in range(k):
                            for b in range(k):
                                out[row, col] = x[b_, ch, i + a, j + b]
                                col += 1
    return out_arr


def col2im(const double[:, ::1] cols, shape, Py_ssize_t k):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t ho = h - k + 1, wo = w - k + 1
    out_arr = np.zeros((n, c, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b_, ch, a, b, i, j, col
    with nogil:
        for b_ in range(n):
            for ch in range(c):
                for a in range(k):
                    for b in range(k):
                        col = (ch * k + a) * k + b
                        for i in range(ho):
                            for j in range(wo):
                                out[b_, ch, i + a, j + b] += cols[(b_ * ho + i) * wo + j, col]
    return out_arr


def maxpool_forward(const double[:, :, :, ::1] x, Py_ssize_t p):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t ho = x.shape[2] // p, wo = x.shape[3] // p
    out_arr = np.empty((n, c, ho, wo))
    arg_arr = np.empty((n, c, ho, wo), dtype=np.uint8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef unsigned char[:, :, :, ::1] arg = arg_arr
    cdef Py_ssize_t b_, ch, i, j, a, b
    cdef double best, v
    cdef unsigned char best_k
    with nogil:
        for b_ in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[b_, ch, i * p, j * p]
                        best_k = 0
                        for a in range(p):
                            for b in range(p):
                                v = x[b_, ch, i * p + a, j * p + b]
                                if v > best:
                                    best = v
                                    best_k = <unsigned char>(a * p + b)
                        out[b_, ch, i, j] = best
                        arg[b_, ch, i, j] = best_k
    return out_arr, arg_arr


def maxpool_backward(const double[:, :, :, ::1] grad, const unsigned char[:, :, :, ::1] arg,
                     shape, Py_ssize_t p):
    cdef Py_ssize_t n = grad.shape[0], c = grad.shape[1], ho = grad.shape[2], wo = grad.shape[3]
    out_arr = np.zeros(tuple(shape))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b_, ch, i, j, kk
    with nogil:
        for b_ in range(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        kk = arg[b_, ch, i, j]
                        out[b_, ch, i * p + kk // p, j * p + kk % p] = grad[b_, ch, i, j]
    return out_arr
