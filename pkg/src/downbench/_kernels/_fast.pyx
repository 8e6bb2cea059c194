# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend; see pure.py for the reference semantics."""

from libc.math cimport pow, sqrt

import numpy as np

BACKEND = "fast"


def conv_valid_axis0(const double[:, ::1] src, const double[::1] taps):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], k = taps.shape[0]
    cdef Py_ssize_t n = h - k + 1
    out_arr = np.zeros((n, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t o, j, x
    cdef double t
    for o in range(n):
        for j in range(k):
            t = taps[j]
            for x in range(w):
                out[o, x] += t * src[o + j, x]
    return out_arr


def gather_axis0(const double[:, ::1] src, const int[:, ::1] idx, const double[:, ::1] wts):
    cdef Py_ssize_t n = idx.shape[0], k = idx.shape[1], w = src.shape[1]
    out_arr = np.zeros((n, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t o, j, x, row
    cdef double t
    for o in range(n):
        for j in range(k):
            t = wts[o, j]
            row = idx[o, j]
            for x in range(w):
                out[o, x] += t * src[row, x]
    return out_arr


def block_mean2d(const double[:, ::1] src, Py_ssize_t s):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    cdef Py_ssize_t ho = (h + s - 1) // s, wo = (w + s - 1) // s
    out_arr = np.zeros((ho, wo), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t by, bx, y, x, y0, y1, x0, x1
    cdef double acc
    for by in range(ho):
        y0 = by * s
        y1 = min(y0 + s, h)
        for bx in range(wo):
            x0 = bx * s
            x1 = min(x0 + s, w)
            acc = 0.0
            for y in range(y0, y1):
                for x in range(x0, x1):
                    acc += src[y, x]
            out[by, bx] = acc / <double>((y1 - y0) * (x1 - x0))
    return out_arr


def dpid_reduce(const double[:, :, ::1] src, const double[:, :, ::1] guide, Py_ssize_t s, double lam):
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], c = src.shape[2]
    cdef Py_ssize_t ho = guide.shape[0], wo = guide.shape[1]
    if c > 8:
        raise ValueError("dpid_reduce supports at most 8 channels")
    out_arr = np.zeros((ho, wo, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double inv_sqrt_c = 1.0 / sqrt(<double>c)
    cdef Py_ssize_t by, bx, y, x, j, y0, y1, x0, x1
    cdef double sv[8]
    cdef double sw, dd, diff, t
    for by in range(ho):
        y0 = by * s
        y1 = min(y0 + s, h)
        for bx in range(wo):
            x0 = bx * s
            x1 = min(x0 + s, w)
            sw = 0.0
            for j in range(c):
                sv[j] = 0.0
            for y in range(y0, y1):
                for x in range(x0, x1):
                    dd = 0.0
                    for j in range(c):
                        diff = src[y, x, j] - guide[by, bx, j]
                        dd += diff * diff
                    t = pow(sqrt(dd) * inv_sqrt_c, lam)
                    sw += t
                    for j in range(c):
                        sv[j] += t * src[y, x, j]
            if sw == 0.0:
                # all weights vanished; fall back to the plain tile mean
                for j in range(c):
                    sv[j] = 0.0
                for y in range(y0, y1):
                    for x in range(x0, x1):
                        for j in range(c):
                            sv[j] += src[y, x, j]
                sw = <double>((y1 - y0) * (x1 - x0))
            for j in range(c):
                out[by, bx, j] = sv[j] / sw
    return out_arr
