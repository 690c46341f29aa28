# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im for NCHW tensors with zero padding."""

import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy, memset

cnp.import_array()

ctypedef fused real_t:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t off, Py_ssize_t stride) nogil:
    # first output index o with o * stride + off >= 0
    if off >= 0:
        return 0
    return (-off + stride - 1) // stride


cdef inline Py_ssize_t _hi(Py_ssize_t off, Py_ssize_t size, Py_ssize_t stride, Py_ssize_t n_out) nogil:
    # one past the last output index o with o * stride + off < size
    cdef Py_ssize_t top
    if size - 1 - off < 0:
        return 0
    top = (size - 1 - off) // stride + 1
    return top if top < n_out else n_out


def im2col(real_t[:, :, :, ::1] x, int kh, int kw, int stride,
           int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    dtype = np.float32 if real_t is float else np.float64
    cols_arr = np.empty((n, c * kh * kw, out_h * out_w), dtype=dtype)
    cdef real_t[:, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, row, pos, y0, y1, x0, x1, offx
    with nogil:
        for i in range(kh):
            y0 = _lo(i - pad_top, stride)
            y1 = _hi(i - pad_top, h, stride, out_h)
            for j in range(kw):
                offx = j - pad_left
                x0 = _lo(offx, stride)
                x1 = _hi(offx, w, stride, out_w)
                for b in range(n):
                    for ch in range(c):
                        row = (ch * kh + i) * kw + j
                        for oy in range(out_h):
                            pos = oy * out_w
                            if oy < y0 or oy >= y1:
                                memset(&cols[b, row, pos], 0, out_w * sizeof(real_t))
                                continue
                            iy = oy * stride + i - pad_top
                            if x0 > 0:
                                memset(&cols[b, row, pos], 0, x0 * sizeof(real_t))
                            if x1 < out_w:
                                memset(&cols[b, row, pos + x1], 0, (out_w - x1) * sizeof(real_t))
                            if x1 <= x0:
                                continue
                            if stride == 1:
                                memcpy(&cols[b, row, pos + x0], &x[b, ch, iy, x0 + offx], (x1 - x0) * sizeof(real_t))
                            else:
                                for ox in range(x0, x1):
                                    cols[b, row, pos + ox] = x[b, ch, iy, ox * stride + offx]
    return cols_arr


def col2im(real_t[:, :, ::1] cols, int c, int h, int w, int kh, int kw,
           int stride, int pad_top, int pad_left, int out_h, int out_w):
    cdef Py_ssize_t n = cols.shape[0]
    dtype = np.float32 if real_t is float else np.float64
    x_arr = np.zeros((n, c, h, w), dtype=dtype)
    cdef real_t[:, :, :, ::1] x = x_arr
    cdef Py_ssize_t b, ch, i, j, oy, ox, iy, row, pos, y0, y1, x0, x1, offx
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(kh):
                    y0 = _lo(i - pad_top, stride)
                    y1 = _hi(i - pad_top, h, stride, out_h)
                    for j in range(kw):
                        offx = j - pad_left
                        x0 = _lo(offx, stride)
                        x1 = _hi(offx, w, stride, out_w)
                        row = (ch * kh + i) * kw + j
                        for oy in range(y0, y1):
                            iy = oy * stride + i - pad_top
                            pos = oy * out_w
                            for ox in range(x0, x1):
                                x[b, ch, iy, ox * stride + offx] += cols[b, row, pos + ox]
    return x_arr


def channel_sums(real_t[:, :, :, ::1] x, real_t[:, :, :, ::1] y):
    """Per-channel sum(x) and sum(x * y), accumulated in double precision."""
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    s_arr = np.zeros(c, dtype=np.float64)
    sp_arr = np.zeros(c, dtype=np.float64)
    cdef double[::1] s = s_arr
    cdef double[::1] sp = sp_arr
    cdef Py_ssize_t b, ch, i, j
    cdef double acc, accp, v
    with nogil:
        for ch in range(c):
            acc = 0.0
            accp = 0.0
            for b in range(n):
                for i in range(h):
                    for j in range(w):
                        v = x[b, ch, i, j]
                        acc = acc + v
                        accp = accp + v * y[b, ch, i, j]
            s[ch] = acc
            sp[ch] = accp
    return s_arr, sp_arr
