# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled conv2d / maxpool2d kernels.

Loop order is fixed so that every reduction sums in the same sequence on
every call; results are deterministic for identical inputs.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def conv2d_forward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                   const double[::1] b):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = h - kh + 1, ow = wd - kw + 1
    out_arr = np.empty((n, o, oh, ow), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t i, f, ch, y, xx, u, v
    cdef double acc
    for i in range(n):
        for f in range(o):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[i, ch, y + u, xx + v] * w[f, ch, u, v]
                    out[i, f, y, xx] = acc + b[f]
    return out_arr


def conv2d_backward(const double[:, :, :, ::1] x, const double[:, :, :, ::1] w,
                    const double[:, :, :, ::1] g):
    """Return (grad_input, grad_kernel, grad_bias) for upstream grad ``g``."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t o = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t oh = g.shape[2], ow = g.shape[3]
    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    gw_arr = np.zeros((o, c, kh, kw), dtype=np.float64)
    gb_arr = np.zeros(o, dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, f, ch, y, xx, u, v
    cdef double gv
    for i in range(n):
        for f in range(o):
            for y in range(oh):
                for xx in range(ow):
                    gv = g[i, f, y, xx]
                    gb[f] += gv
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                gw[f, ch, u, v] += gv * x[i, ch, y + u, xx + v]
                                gx[i, ch, y + u, xx + v] += gv * w[f, ch, u, v]
    return gx_arr, gw_arr, gb_arr


def maxpool2d_forward(const double[:, :, :, ::1] x, Py_ssize_t k):
    """Non-overlapping k×k max pooling; returns (out, flat argmax indices)."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t oh = h // k, ow = wd // k
    out_arr = np.empty((n, c, oh, ow), dtype=np.float64)
    idx_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t i, ch, y, xx, u, v, best
    cdef double m, val
    for i in range(n):
        for ch in range(c):
            for y in range(oh):
                for xx in range(ow):
                    m = x[i, ch, y * k, xx * k]
                    best = (y * k) * wd + xx * k
                    for u in range(k):
                        for v in range(k):
                            val = x[i, ch, y * k + u, xx * k + v]
                            if val > m:
                                m = val
                                best = (y * k + u) * wd + xx * k + v
                    out[i, ch, y, xx] = m
                    idx[i, ch, y, xx] = best
    return out_arr, idx_arr


def maxpool2d_backward(const double[:, :, :, ::1] g, const cnp.int64_t[:, :, :, ::1] idx,
                       Py_ssize_t h, Py_ssize_t wd):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    gx_arr = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, ch, y, xx, p
    for i in range(n):
        for ch in range(c):
            for y in range(oh):
                for xx in range(ow):
                    p = idx[i, ch, y, xx]
                    gx[i, ch, p // wd, p % wd] += g[i, ch, y, xx]
    return gx_arr
