"""Measurement model for single-coil Cartesian MRI.

Images and k-space are complex numpy arrays whose last two axes are
(height, width); leading axes are treated as a batch. The Fourier transform
is centered (DC at ``(h // 2, w // 2)``) and unitary, so for a binary mask the
pseudo-inverse of the sampling operator equals its adjoint.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "SamplingMask",
    "make_vardens_mask",
    "full_mask",
    "fft2c",
    "ifft2c",
    "forward",
    "adjoint",
    "add_noise",
    "project_data_consistent",
    "nullspace_project",
    "save_mask",
    "load_mask",
    "mask_to_bytes",
    "mask_from_bytes",
]

MASK_MAGIC = b"GCSM"
MASK_VERSION = 1


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-space sampling pattern plus the parameters that produced it."""

    indicator: np.ndarray
    fraction: float
    density_power: float = 0.0
    seed: int = 0
    bool_indicator: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ind = np.asarray(self.indicator)
        if ind.ndim != 2:
            raise ValueError(f"mask indicator must be 2D, got shape {ind.shape}")
        ind = ind.astype(bool)
        ind.setflags(write=False)
        object.__setattr__(self, "bool_indicator", ind)
        as_float = ind.astype(np.float64)
        as_float.setflags(write=False)
        object.__setattr__(self, "indicator", as_float)

    @property
    def shape(self) -> tuple[int, int]:
        return self.indicator.shape

    @property
    def height(self) -> int:
        return self.indicator.shape[0]

    @property
    def width(self) -> int:
        return self.indicator.shape[1]

    @property
    def count(self) -> int:
        return int(self.bool_indicator.sum())

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            np.array_equal(self.bool_indicator, other.bool_indicator)
            and self.fraction == other.fraction
            and self.density_power == other.density_power
            and self.seed == other.seed
        )

    __hash__ = None


def full_mask(height: int, width: int) -> SamplingMask:
    return SamplingMask(np.ones((height, width)), fraction=1.0)


def center_side(height: int, width: int) -> int:
    return math.ceil(0.04 * min(height, width))


def _center_slices(height: int, width: int, side: int) -> tuple[slice, slice]:
    r0 = height // 2 - side // 2
    c0 = width // 2 - side // 2
    return slice(r0, r0 + side), slice(c0, c0 + side)


def make_vardens_mask(
    height: int, width: int, fraction: float, density_power: float = 3.0, seed: int = 0
) -> SamplingMask:
    """Random variable-density mask with an exact sample count.

    Sampling probability at distance ``r`` from the k-space center follows
    ``(1 - r / r_max) ** density_power``. A fully sampled central square of
    side ``ceil(0.04 * min(height, width))`` is always included. Remaining
    locations are Bernoulli draws with probabilities rescaled to the leftover
    budget; the draw is then trimmed or topped up by probability rank so the
    total equals ``round(fraction * height * width)``.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    if height < 4 or width < 4:
        raise ValueError(f"mask dimensions must be >= 4, got {height}x{width}")
    if density_power <= 0:
        raise ValueError(f"density_power must be positive, got {density_power}")

    total = height * width
    budget = int(round(fraction * total))
    side = center_side(height, width)
    center = np.zeros((height, width), dtype=bool)
    center[_center_slices(height, width, side)] = True
    n_center = int(center.sum())
    if n_center > budget:
        raise ValueError(
            f"fully sampled center ({n_center} samples) exceeds budget of {budget}"
        )

    rows = np.arange(height) - height // 2
    cols = np.arange(width) - width // 2
    r = np.hypot(rows[:, None], cols[None, :])
    density = (1.0 - r / r.max()) ** density_power
    density[center] = 0.0

    remaining = budget - n_center
    prob = _scale_to_budget(density, remaining)

    rng = np.random.default_rng(seed)
    u = rng.random((height, width))
    drawn = (u < prob) & ~center

    # Rank candidates: drawn points first, then by probability, ties broken by
    # the uniform draw. Keep exactly `remaining` of them.
    candidates = np.flatnonzero(~center.ravel())
    key_prob = prob.ravel()[candidates]
    key_u = u.ravel()[candidates]
    key_drawn = drawn.ravel()[candidates]
    order = np.lexsort((key_u, -key_prob, ~key_drawn))
    chosen = candidates[order[:remaining]]

    indicator = center.copy().ravel()
    indicator[chosen] = True
    return SamplingMask(
        indicator.reshape(height, width),
        fraction=float(fraction),
        density_power=float(density_power),
        seed=int(seed),
    )


def _scale_to_budget(density: np.ndarray, budget: int) -> np.ndarray:
    """Scale densities into probabilities (capped at 1) summing to ``budget``."""
    prob = np.zeros_like(density)
    if budget <= 0:
        return prob
    free = density > 0
    fixed = np.zeros_like(free)
    for _ in range(density.size):
        active = free & ~fixed
        left = budget - fixed.sum()
        mass = density[active].sum()
        if left <= 0 or mass <= 0:
            break
        prob[active] = density[active] * (left / mass)
        over = active & (prob >= 1.0)
        if not over.any():
            break
        prob[over] = 1.0
        fixed |= over
    return prob


def _check_shape(arr: np.ndarray, mask: SamplingMask, what: str) -> None:
    if arr.shape[-2:] != mask.shape:
        raise ValueError(f"{what} shape {arr.shape[-2:]} does not match mask {mask.shape}")


def fft2c(x: np.ndarray) -> np.ndarray:
    """Centered unitary 2D DFT over the last two axes."""
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=axes), norm="ortho"), axes=axes
    )


def ifft2c(k: np.ndarray) -> np.ndarray:
    axes = (-2, -1)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(k, axes=axes), norm="ortho"), axes=axes
    )


def forward(x: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Undersampled k-space ``y = M F x``."""
    x = np.asarray(x)
    _check_shape(x, mask, "image")
    return fft2c(x.astype(np.complex128, copy=False)) * mask.indicator


def adjoint(y: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Zero-filled reconstruction ``F^H M y`` (the pseudo-inverse)."""
    y = np.asarray(y)
    _check_shape(y, mask, "k-space")
    return ifft2c(y.astype(np.complex128, copy=False) * mask.indicator)


def add_noise(y: np.ndarray, mask: SamplingMask, sigma: float, seed: int = 0) -> np.ndarray:
    """Add complex Gaussian noise (std ``sigma`` per real/imag part) on the mask support."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    y = np.asarray(y, dtype=np.complex128)
    _check_shape(y, mask, "k-space")
    if sigma == 0:
        return y.copy()
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, y.shape) + 1j * rng.normal(0.0, sigma, y.shape)
    return y + noise * mask.indicator


def project_data_consistent(
    x_check: np.ndarray, y: np.ndarray, mask: SamplingMask
) -> np.ndarray:
    """Hard data-consistency projection ``F^H (M y + (I - M) F x_check)``."""
    x_check = np.asarray(x_check)
    _check_shape(x_check, mask, "image")
    _check_shape(np.asarray(y), mask, "k-space")
    k = fft2c(x_check.astype(np.complex128, copy=False))
    k = np.where(mask.bool_indicator, y, k)
    return ifft2c(k)


def nullspace_project(x: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Component of ``x`` invisible to the sampling operator."""
    x = np.asarray(x)
    _check_shape(x, mask, "image")
    k = fft2c(x.astype(np.complex128, copy=False))
    return ifft2c(k * (1.0 - mask.indicator))


# --- serialization ---------------------------------------------------------

_MASK_HEADER = struct.Struct("<4sHIIddQ")


def mask_to_bytes(mask: SamplingMask) -> bytes:
    header = _MASK_HEADER.pack(
        MASK_MAGIC,
        MASK_VERSION,
        mask.height,
        mask.width,
        mask.fraction,
        mask.density_power,
        mask.seed,
    )
    return header + np.packbits(mask.bool_indicator.ravel()).tobytes()


def mask_from_bytes(blob: bytes) -> SamplingMask:
    if len(blob) < _MASK_HEADER.size:
        raise ValueError("truncated mask file")
    magic, version, h, w, fraction, power, seed = _MASK_HEADER.unpack_from(blob)
    if magic != MASK_MAGIC:
        raise ValueError(f"bad mask magic {magic!r}")
    if version != MASK_VERSION:
        raise ValueError(f"unsupported mask version {version}")
    nbytes = (h * w + 7) // 8
    payload = np.frombuffer(blob, dtype=np.uint8, count=nbytes, offset=_MASK_HEADER.size)
    if payload.size != nbytes:
        raise ValueError("truncated mask payload")
    bits = np.unpackbits(payload)[: h * w].reshape(h, w)
    return SamplingMask(bits, fraction=fraction, density_power=power, seed=seed)


def save_mask(mask: SamplingMask, path) -> None:
    Path(path).write_bytes(mask_to_bytes(mask))


def load_mask(path) -> SamplingMask:
    return mask_from_bytes(Path(path).read_bytes())
