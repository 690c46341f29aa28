"""Differentiable network kernels on NCHW numpy arrays.

Each op is a pure forward function plus a backward function that takes the
forward inputs again and returns exact gradients. Nothing is taped; callers
keep whatever they need for the backward pass.

The im2col/col2im loops come from the compiled extension when it is
importable; set ``GANCS_PURE_PYTHON=1`` to force the numpy fallback.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _pykernels

_ext = None
if not os.environ.get("GANCS_PURE_PYTHON"):
    try:
        from . import _ckernels as _ext
    except ImportError:
        _ext = None

BN_EPS = 1e-5
BN_MOMENTUM = 0.99


def backend() -> str:
    return "cython" if _ext is not None else "numpy"


def _kernels(use_ext: bool | None):
    if use_ext is None:
        use_ext = _ext is not None
    if use_ext and _ext is None:
        raise RuntimeError("compiled kernels are not available")
    return _ext if use_ext else _pykernels


@dataclass
class LayerGradients:
    input_grad: np.ndarray
    param_grads: dict[str, np.ndarray] = field(default_factory=dict)


# --- convolution -------------------------------------------------------------


def conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: str):
    """Return ``(out_h, out_w, pad_top, pad_left)``; "same" pads like TensorFlow."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        out_h, out_w = math.ceil(h / stride), math.ceil(w / stride)
        pad_h = max((out_h - 1) * stride + kh - h, 0)
        pad_w = max((out_w - 1) * stride + kw - w, 0)
        return out_h, out_w, pad_h // 2, pad_w // 2
    if padding == "valid":
        if h < kh or w < kw:
            raise ValueError(f"input {h}x{w} smaller than kernel {kh}x{kw}")
        return (h - kh) // stride + 1, (w - kw) // stride + 1, 0, 0
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")


def _check_conv(x, kernel):
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError("conv2d expects NCHW input and OIHW kernel")
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(
            f"channel mismatch: input has {x.shape[1]}, kernel expects {kernel.shape[1]}"
        )


def _is_pointwise(kernel, stride):
    return kernel.shape[2] == 1 and kernel.shape[3] == 1 and stride == 1


def conv2d_forward(x, kernel, bias=None, stride=1, padding="same", use_ext=None):
    """Cross-correlation of ``x`` (N,C,H,W) with ``kernel`` (O,C,kh,kw)."""
    _check_conv(x, kernel)
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    out_h, out_w, pt, pl = conv_geometry(h, w, kh, kw, stride, padding)
    wmat = kernel.reshape(o, -1)
    if _is_pointwise(kernel, stride):
        out = np.matmul(wmat, x.reshape(n, c, h * w))
    else:
        k = _kernels(use_ext)
        cols = k.im2col(np.ascontiguousarray(x), kh, kw, stride, pt, pl, out_h, out_w)
        out = np.matmul(wmat, cols)
    out = out.reshape(n, o, out_h, out_w)
    if bias is not None:
        out += bias.reshape(1, o, 1, 1)
    return out


def conv2d_backward(x, kernel, stride, padding, output_grad, use_ext=None) -> LayerGradients:
    _check_conv(x, kernel)
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    out_h, out_w, pt, pl = conv_geometry(h, w, kh, kw, stride, padding)
    if output_grad.shape != (n, o, out_h, out_w):
        raise ValueError(
            f"output_grad shape {output_grad.shape} != forward output {(n, o, out_h, out_w)}"
        )
    g = output_grad.reshape(n, o, out_h * out_w)
    wmat = kernel.reshape(o, -1)
    if _is_pointwise(kernel, stride):
        cols = x.reshape(n, c, h * w)
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
        dx = np.matmul(wmat.T, g).reshape(n, c, h, w)
    else:
        k = _kernels(use_ext)
        cols = k.im2col(np.ascontiguousarray(x), kh, kw, stride, pt, pl, out_h, out_w)
        dw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))
        dcols = np.ascontiguousarray(np.matmul(wmat.T, g))
        dx = k.col2im(dcols, c, h, w, kh, kw, stride, pt, pl, out_h, out_w)
    db = output_grad.sum(axis=(0, 2, 3))
    return LayerGradients(
        input_grad=dx.astype(x.dtype, copy=False),
        param_grads={"weight": dw.reshape(kernel.shape).astype(kernel.dtype, copy=False),
                     "bias": db.astype(kernel.dtype, copy=False)},
    )


def conv2d_reference(x, kernel, bias=None, stride=1, padding="same"):
    """Direct nested-loop convolution; slow, used as a test oracle."""
    n, c, h, w = x.shape
    o, _, kh, kw = kernel.shape
    out_h, out_w, pt, pl = conv_geometry(h, w, kh, kw, stride, padding)
    out = np.zeros((n, o, out_h, out_w), dtype=np.float64)
    for b in range(n):
        for oc in range(o):
            for oy in range(out_h):
                for ox in range(out_w):
                    acc = 0.0
                    for ic in range(c):
                        for i in range(kh):
                            iy = oy * stride + i - pt
                            if iy < 0 or iy >= h:
                                continue
                            for j in range(kw):
                                ix = ox * stride + j - pl
                                if 0 <= ix < w:
                                    acc += float(x[b, ic, iy, ix]) * float(kernel[oc, ic, i, j])
                    out[b, oc, oy, ox] = acc + (0.0 if bias is None else float(bias[oc]))
    return out


# --- batch normalization -----------------------------------------------------


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, channels: int, dtype=np.float32):
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def _batch_stats(x, use_ext):
    k = _kernels(use_ext)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    xc = np.ascontiguousarray(x)
    s, sq = k.channel_sums(xc, xc)
    mean = s / count
    var = np.maximum(sq / count - mean * mean, 0.0)
    return mean, var


def batchnorm_forward(x, gamma, beta, mode="train", state=None, use_ext=None):
    """Per-channel standardization over (batch, height, width).

    In train mode batch statistics are used and, when ``state`` is given,
    its running averages are updated in place with momentum 0.99.
    """
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch normalization in train mode needs batch size >= 2")
        mean, var = _batch_stats(x, use_ext)
        if state is not None:
            state.running_mean[...] = BN_MOMENTUM * state.running_mean + (1 - BN_MOMENTUM) * mean
            state.running_var[...] = BN_MOMENTUM * state.running_var + (1 - BN_MOMENTUM) * var
    elif mode == "inference":
        if state is None:
            raise ValueError("inference mode needs running statistics")
        mean = state.running_mean.astype(np.float64)
        var = state.running_var.astype(np.float64)
    else:
        raise ValueError(f"mode must be 'train' or 'inference', got {mode!r}")
    inv = 1.0 / np.sqrt(var + BN_EPS)
    scale = (gamma * inv).astype(x.dtype)
    shift = (beta - mean * gamma * inv).astype(x.dtype)
    return x * scale.reshape(1, -1, 1, 1) + shift.reshape(1, -1, 1, 1)


def batchnorm_backward(x, gamma, output_grad, mode="train", state=None, use_ext=None) -> LayerGradients:
    if output_grad.shape != x.shape:
        raise ValueError(f"output_grad shape {output_grad.shape} != input shape {x.shape}")
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch normalization in train mode needs batch size >= 2")
        mean, var = _batch_stats(x, use_ext)
    else:
        if state is None:
            raise ValueError("inference mode needs running statistics")
        mean = state.running_mean.astype(np.float64)
        var = state.running_var.astype(np.float64)
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.astype(x.dtype).reshape(1, -1, 1, 1)) * inv.astype(x.dtype).reshape(1, -1, 1, 1)
    k = _kernels(use_ext)
    g = np.ascontiguousarray(output_grad)
    dbeta, dgamma = k.channel_sums(g, np.ascontiguousarray(xhat))
    if mode == "train":
        count = x.shape[0] * x.shape[2] * x.shape[3]
        coef = (gamma * inv).reshape(1, -1, 1, 1)
        dx = coef * (
            g - (dbeta / count).reshape(1, -1, 1, 1) - xhat * (dgamma / count).reshape(1, -1, 1, 1)
        )
    else:
        dx = g * (gamma * inv).reshape(1, -1, 1, 1)
    return LayerGradients(
        input_grad=dx.astype(x.dtype, copy=False),
        param_grads={"gamma": dgamma.astype(gamma.dtype), "beta": dbeta.astype(gamma.dtype)},
    )


# --- pointwise ---------------------------------------------------------------


def relu(x):
    return np.maximum(x, 0)


def relu_backward(x, output_grad):
    # derivative at exactly 0 is taken as 0
    return output_grad * (x > 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(x, output_grad):
    s = sigmoid(x)
    return output_grad * s * (1 - s)


def spatial_mean(x):
    """Average over channels and pixels: one scalar per sample."""
    return x.reshape(x.shape[0], -1).mean(axis=1)


def spatial_mean_backward(x, output_grad):
    per = x[0].size
    return np.broadcast_to(
        (output_grad / per).reshape(-1, *([1] * (x.ndim - 1))), x.shape
    ).astype(x.dtype)
