"""Pure-numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def im2col(x, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    n, c, h, w = x.shape
    pad_bottom = max((out_h - 1) * stride + kh - h - pad_top, 0)
    pad_right = max((out_w - 1) * stride + kw - w - pad_left, 0)
    xp = np.pad(x, ((0, 0), (0, 0), (pad_top, pad_bottom), (pad_left, pad_right)))
    cols = np.empty((n, c, kh, kw, out_h, out_w), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[
                :, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride
            ]
    return cols.reshape(n, c * kh * kw, out_h * out_w)


def col2im(cols, c, h, w, kh, kw, stride, pad_top, pad_left, out_h, out_w):
    n = cols.shape[0]
    pad_bottom = max((out_h - 1) * stride + kh - h - pad_top, 0)
    pad_right = max((out_w - 1) * stride + kw - w - pad_left, 0)
    xp = np.zeros((n, c, h + pad_top + pad_bottom, w + pad_left + pad_right), dtype=cols.dtype)
    cols = cols.reshape(n, c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += cols[
                :, :, i, j
            ]
    return np.ascontiguousarray(xp[:, :, pad_top : pad_top + h, pad_left : pad_left + w])


def channel_sums(x, y):
    s = x.sum(axis=(0, 2, 3), dtype=np.float64)
    sp = (x.astype(np.float64) * y).sum(axis=(0, 2, 3))
    return s, sp
