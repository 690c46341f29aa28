"""Image quality metrics: SNR (dB), center-cropped SSIM, NRMSE and timing."""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

SNR_CAP_DB = 300.0


@dataclass
class MetricReport:
    snr_db: float
    ssim: float
    nrmse: float
    recon_time_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def _pair(reference, estimate):
    ref = np.asarray(reference)
    est = np.asarray(estimate)
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {est.shape}")
    return ref, est


def snr_db(reference, estimate) -> float:
    """``20 log10(||ref|| / ||ref - est||)`` over complex entries, capped at 300 dB."""
    ref, est = _pair(reference, estimate)
    signal = np.linalg.norm(ref)
    if signal == 0:
        raise ValueError("reference image is all zeros")
    err = np.linalg.norm(ref - est)
    if err == 0:
        return SNR_CAP_DB
    return float(min(SNR_CAP_DB, 20.0 * np.log10(signal / err)))


def nrmse(reference, estimate) -> float:
    """``||ref - est|| / ||ref||`` over complex entries."""
    ref, est = _pair(reference, estimate)
    signal = np.linalg.norm(ref)
    if signal == 0:
        raise ValueError("reference image is all zeros")
    return float(np.linalg.norm(ref - est) / signal)


def center_crop_slices(shape, crop: int) -> tuple[slice, slice]:
    h, w = shape[-2:]
    if crop < 1 or crop > min(h, w):
        raise ValueError(f"crop {crop} does not fit in a {h}x{w} image")
    r0, c0 = (h - crop) // 2, (w - crop) // 2
    return slice(r0, r0 + crop), slice(c0, c0 + crop)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def _filter_valid(img, win):
    views = np.lib.stride_tricks.sliding_window_view(img, win.shape)
    return np.einsum("ijkl,kl->ij", views, win)


def ssim_cropped(
    reference,
    estimate,
    crop: int = 50,
    data_range: float | None = None,
    window: int = 11,
    sigma: float = 1.5,
) -> float:
    """SSIM of magnitude images over the central ``crop x crop`` window.

    Gaussian-weighted local statistics (11x11, sigma 1.5), K1 = 0.01,
    K2 = 0.03, averaged over all window positions fully inside the crop.
    ``data_range`` defaults to the maximum magnitude of the reference crop,
    which makes the index asymmetric in its arguments.
    """
    ref, est = _pair(reference, estimate)
    rs, cs = center_crop_slices(ref.shape, crop)
    a = np.abs(ref[..., rs, cs]).astype(np.float64)
    b = np.abs(est[..., rs, cs]).astype(np.float64)
    win = gaussian_window(min(window, crop), sigma)
    if data_range is None:
        data_range = float(a.max())
    if data_range <= 0:
        data_range = 1.0
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a * mu_a
    var_b = _filter_valid(b * b, win) - mu_b * mu_b
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def time_reconstruction(recon: Callable[[], object], repeats: int = 5) -> float:
    """Median wall-clock seconds over ``repeats`` calls, after one warm-up call."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    recon()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        recon()
        times.append(time.perf_counter() - t0)
    return float(statistics.median(times))


def evaluate(reference, estimate, crop: int = 50, recon_time: float = 0.0) -> MetricReport:
    crop = min(crop, *np.asarray(reference).shape[-2:])
    return MetricReport(
        snr_db(reference, estimate), ssim_cropped(reference, estimate, crop), nrmse(reference, estimate), recon_time
    )
