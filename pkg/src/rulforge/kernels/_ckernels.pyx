# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for 1-D convolution and max pooling.

Same contracts as numpy_backend; plain nested loops over typed memoryviews,
so accumulation order is fixed and the GIL is released while computing.
"""

import numpy as np


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    cdef Py_ssize_t batch = x.shape[0], length = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], cout = w.shape[2]
    cdef Py_ssize_t out_len = length - k + 1
    out_arr = np.empty((batch, out_len, cout))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t n, t, o, j, c
    cdef double acc
    with nogil:
        for n in range(batch):
            for t in range(out_len):
                for o in range(cout):
                    acc = b[o]
                    for j in range(k):
                        for c in range(cin):
                            acc += x[n, t + j, c] * w[j, c, o]
                    out[n, t, o] = acc
    return out_arr


def conv1d_backward(double[:, :, ::1] x, double[:, :, ::1] w,
                    double[:, :, ::1] grad_out):
    cdef Py_ssize_t batch = x.shape[0], length = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t k = w.shape[0], cout = w.shape[2]
    cdef Py_ssize_t out_len = grad_out.shape[1]
    gx_arr = np.zeros((batch, length, cin))
    gw_arr = np.zeros((k, cin, cout))
    gb_arr = np.zeros(cout)
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, t, o, j, c
    cdef double g
    with nogil:
        for n in range(batch):
            for t in range(out_len):
                for o in range(cout):
                    g = grad_out[n, t, o]
                    gb[o] += g
                    for j in range(k):
                        for c in range(cin):
                            gw[j, c, o] += x[n, t + j, c] * g
                            gx[n, t + j, c] += w[j, c, o] * g
    return gx_arr, gw_arr, gb_arr


def maxpool1d_forward(double[:, :, ::1] x, Py_ssize_t pool):
    cdef Py_ssize_t batch = x.shape[0], length = x.shape[1], channels = x.shape[2]
    cdef Py_ssize_t out_len = length // pool
    out_arr = np.empty((batch, out_len, channels))
    idx_arr = np.empty((batch, out_len, channels), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef long long[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t n, t, c, p, base
    cdef double best, v
    cdef Py_ssize_t best_p
    with nogil:
        for n in range(batch):
            for t in range(out_len):
                base = t * pool
                for c in range(channels):
                    best = x[n, base, c]
                    best_p = 0
                    for p in range(1, pool):
                        v = x[n, base + p, c]
                        if v > best:
                            best = v
                            best_p = p
                    out[n, t, c] = best
                    idx[n, t, c] = best_p
    return out_arr, idx_arr


def maxpool1d_backward(long long[:, :, ::1] idx, double[:, :, ::1] grad_out,
                       Py_ssize_t length, Py_ssize_t pool):
    cdef Py_ssize_t batch = grad_out.shape[0], out_len = grad_out.shape[1]
    cdef Py_ssize_t channels = grad_out.shape[2]
    gx_arr = np.zeros((batch, length, channels))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t n, t, c
    with nogil:
        for n in range(batch):
            for t in range(out_len):
                for c in range(channels):
                    gx[n, t * pool + idx[n, t, c], c] += grad_out[n, t, c]
    return gx_arr
