"""Tensor kernels with reverse-mode gradients (NCHW numpy arrays)."""

from .gradcheck import GradCheckReport, grad_check, grad_check_report, numeric_gradient, relative_error
from .ops import (
    BatchNormState,
    LayerGradients,
    backend,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    conv2d_reference,
    conv_geometry,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    spatial_mean,
    spatial_mean_backward,
)
from .tensorio import load_tensor, read_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor

__all__ = [
    "BatchNormState",
    "LayerGradients",
    "backend",
    "batchnorm_backward",
    "batchnorm_forward",
    "conv2d_backward",
    "conv2d_forward",
    "conv2d_reference",
    "conv_geometry",
    "GradCheckReport",
    "grad_check",
    "grad_check_report",
    "numeric_gradient",
    "relative_error",
    "relu",
    "relu_backward",
    "sigmoid",
    "sigmoid_backward",
    "spatial_mean",
    "spatial_mean_backward",
    "load_tensor",
    "read_tensor",
    "save_tensor",
    "tensor_from_bytes",
    "tensor_to_bytes",
    "write_tensor",
]
