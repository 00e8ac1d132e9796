# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled augmentation kernels.

Must stay operation-for-operation identical to _kernels_python.py: same
float32 arithmetic in the same order (the build forbids FMA contraction),
so both backends produce bit-identical images.
"""

import numpy as np

cimport numpy as cnp


def crop_resize_bilinear(const float[:, :, ::1] src,
                         const Py_ssize_t[::1] y0, const Py_ssize_t[::1] y1,
                         const float[::1] fy,
                         const Py_ssize_t[::1] x0, const Py_ssize_t[::1] x1,
                         const float[::1] fx):
    cdef Py_ssize_t oh = y0.shape[0]
    cdef Py_ssize_t ow = x0.shape[0]
    cdef Py_ssize_t nc = src.shape[2]
    out_arr = np.empty((oh, ow, nc), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef float a, b, d, e, top, bot, wx, wy
    for i in range(oh):
        wy = fy[i]
        for j in range(ow):
            wx = fx[j]
            for c in range(nc):
                a = src[y0[i], x0[j], c]
                b = src[y0[i], x1[j], c]
                d = src[y1[i], x0[j], c]
                e = src[y1[i], x1[j], c]
                top = a + (b - a) * wx
                bot = d + (e - d) * wx
                out[i, j, c] = top + (bot - top) * wy
    return out_arr


def gaussian_blur(const float[:, :, ::1] src, const float[::1] taps):
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    cdef Py_ssize_t nc = src.shape[2]
    cdef Py_ssize_t ntaps = taps.shape[0]
    cdef Py_ssize_t r = (ntaps - 1) // 2
    tmp_arr = np.empty((h, w, nc), dtype=np.float32)
    out_arr = np.empty((h, w, nc), dtype=np.float32)
    cdef float[:, :, ::1] tmp = tmp_arr
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, c, t, jj, ii
    cdef float acc
    for i in range(h):
        for j in range(w):
            for c in range(nc):
                acc = 0.0
                for t in range(ntaps):
                    jj = j + t - r
                    if jj < 0:
                        jj = 0
                    elif jj >= w:
                        jj = w - 1
                    acc = acc + taps[t] * src[i, jj, c]
                tmp[i, j, c] = acc
    for i in range(h):
        for j in range(w):
            for c in range(nc):
                acc = 0.0
                for t in range(ntaps):
                    ii = i + t - r
                    if ii < 0:
                        ii = 0
                    elif ii >= h:
                        ii = h - 1
                    acc = acc + taps[t] * tmp[ii, j, c]
                out[i, j, c] = acc
    return out_arr
