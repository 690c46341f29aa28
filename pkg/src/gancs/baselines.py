"""Classical compressed-sensing reconstructions: zero-filling, wavelet l1 (FISTA), TV (ADMM)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kspace
from .kspace import SamplingMask


class DivergenceError(FloatingPointError):
    """Solver objective kept increasing or became non-finite."""


@dataclass(frozen=True)
class SolverConfig:
    regularization_weight: float = 1e-3
    max_iters: int = 300
    tolerance: float = 1e-6
    rho: float = 1.0
    levels: int = 3

    def __post_init__(self):
        if self.regularization_weight < 0:
            raise ValueError("regularization_weight must be non-negative")
        if self.max_iters < 1 or self.tolerance <= 0 or self.rho <= 0 or self.levels < 1:
            raise ValueError("max_iters, tolerance, rho and levels must be positive")


@dataclass
class SolverResult:
    image: np.ndarray
    objective: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective"])
            for i, v in enumerate(self.objective):
                w.writerow([i, repr(v)])


# --- Haar wavelet ------------------------------------------------------------

_S = 1.0 / np.sqrt(2.0)


def _check_levels(shape, levels):
    h, w = shape[-2:]
    if levels < 0 or h % (2**levels) or w % (2**levels):
        raise ValueError(f"image {h}x{w} is not divisible by 2**{levels}")


def haar_dwt(x: np.ndarray, levels: int = 1) -> np.ndarray:
    """Orthonormal 2D Haar transform, coefficients in the usual Mallat layout.

    Works on real or complex arrays; leading axes are batch.
    """
    x = np.asarray(x)
    _check_levels(x.shape, levels)
    out = np.array(x, dtype=np.result_type(x, np.float64), copy=True)
    h, w = out.shape[-2:]
    for _ in range(levels):
        a = out[..., :h, :w]
        lo = (a[..., 0::2, :] + a[..., 1::2, :]) * _S
        hi = (a[..., 0::2, :] - a[..., 1::2, :]) * _S
        rows = np.concatenate([lo, hi], axis=-2)
        lo = (rows[..., :, 0::2] + rows[..., :, 1::2]) * _S
        hi = (rows[..., :, 0::2] - rows[..., :, 1::2]) * _S
        out[..., :h, :w] = np.concatenate([lo, hi], axis=-1)
        h //= 2
        w //= 2
    return out


def haar_idwt(c: np.ndarray, levels: int = 1) -> np.ndarray:
    c = np.asarray(c)
    _check_levels(c.shape, levels)
    out = np.array(c, dtype=np.result_type(c, np.float64), copy=True)
    H, W = out.shape[-2:]
    for lev in reversed(range(levels)):
        h, w = H >> lev, W >> lev
        a = out[..., :h, :w]
        lo, hi = a[..., :, : w // 2], a[..., :, w // 2 :]
        cols = np.empty_like(a)
        cols[..., :, 0::2] = (lo + hi) * _S
        cols[..., :, 1::2] = (lo - hi) * _S
        lo, hi = cols[..., : h // 2, :], cols[..., h // 2 :, :]
        rec = np.empty_like(a)
        rec[..., 0::2, :] = (lo + hi) * _S
        rec[..., 1::2, :] = (lo - hi) * _S
        out[..., :h, :w] = rec
    return out


def soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """Complex magnitude shrinkage ``v * max(0, 1 - tau / |v|)``."""
    v = np.asarray(v)
    if tau == 0:
        return v.copy()
    mag = np.abs(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > tau, 1.0 - tau / np.where(mag > 0, mag, 1.0), 0.0)
    return v * scale


# --- solvers -----------------------------------------------------------------


def zero_filled(y: np.ndarray, mask: SamplingMask) -> np.ndarray:
    return kspace.adjoint(y, mask)


def _wavelet_objective(x, y, mask, alpha, levels):
    r = kspace.forward(x, mask) - y
    return 0.5 * float(np.sum(np.abs(r) ** 2)) + alpha * float(np.sum(np.abs(haar_dwt(x, levels))))


def cs_wavelet(y: np.ndarray, mask: SamplingMask, config: SolverConfig = SolverConfig()) -> SolverResult:
    """Minimize ``0.5 ||y - M F x||^2 + alpha ||W x||_1`` with monotone FISTA.

    The masked unitary operator has Lipschitz constant 1, so the step is 1.
    Each iterate is the better of the proximal step and the previous iterate,
    which keeps the objective non-increasing while retaining momentum.
    """
    y = np.asarray(y, dtype=np.complex128)
    alpha, levels = config.regularization_weight, config.levels
    _check_levels(y.shape, levels)

    def prox_grad(z):
        g = z - kspace.adjoint(kspace.forward(z, mask) - y, mask)
        if alpha == 0:
            return g
        return haar_idwt(soft_threshold(haar_dwt(g, levels), alpha), levels)

    x = kspace.adjoint(y, mask)
    f = _wavelet_objective(x, y, mask, alpha, levels)
    objective = [f]
    z, t = x.copy(), 1.0
    u_prev = x
    rising = 0
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        u = prox_grad(z)
        fu = _wavelet_objective(u, y, mask, alpha, levels)
        if not np.isfinite(fu):
            raise DivergenceError(f"cs_wavelet: non-finite objective at iteration {it}")
        rising = rising + 1 if fu > objective[-1] else 0
        if rising >= 20:
            raise DivergenceError(f"cs_wavelet: objective increased for 20 iterations (at {it})")
        x_prev = x
        if fu <= f:
            x, f = u, fu
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x + (t / t_next) * (u - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        objective.append(f)
        # measured on the proximal candidate: x itself stalls when a step is rejected
        change = np.linalg.norm(u - u_prev) / max(np.linalg.norm(u_prev), 1e-30)
        u_prev = u
        if change < config.tolerance:
            converged = True
            break
    return SolverResult(x, objective, it, converged)


def _grad(x):
    """Periodic forward differences (vertical, horizontal) stacked on a new axis."""
    return np.stack([np.roll(x, -1, axis=-2) - x, np.roll(x, -1, axis=-1) - x])


def _grad_adjoint(g):
    return (np.roll(g[0], 1, axis=-2) - g[0]) + (np.roll(g[1], 1, axis=-1) - g[1])


def _laplacian_eigs(h, w):
    """Eigenvalues of D^H D in the centered Fourier basis."""
    ky = 2.0 - 2.0 * np.cos(2 * np.pi * np.fft.fftfreq(h))
    kx = 2.0 - 2.0 * np.cos(2 * np.pi * np.fft.fftfreq(w))
    return np.fft.fftshift(ky[:, None] + kx[None, :])


def _tv_objective(x, y, mask, alpha):
    r = kspace.forward(x, mask) - y
    return 0.5 * float(np.sum(np.abs(r) ** 2)) + alpha * float(np.sum(np.abs(_grad(x))))


def cs_tv(
    y: np.ndarray,
    mask: SamplingMask,
    config: SolverConfig = SolverConfig(regularization_weight=1e-3, max_iters=200),
    abs_tolerance: float | None = None,
) -> SolverResult:
    """Minimize ``0.5 ||y - M F x||^2 + alpha ||D x||_1`` (anisotropic, periodic) by ADMM.

    Splitting ``z = D x`` with scaled dual ``u``. The x-update is exact in
    k-space since both the mask and the periodic Laplacian are diagonal there.
    Stops when primal ``||Dx - z||`` and dual ``rho ||D^H (z - z_prev)||``
    residuals fall below ``tolerance`` relative to their natural scales
    (``max(||Dx||, ||z||)`` and ``rho ||D^H u||``), plus an optional
    per-element ``abs_tolerance``.
    """
    y = np.asarray(y, dtype=np.complex128)
    alpha, rho = config.regularization_weight, config.rho
    h, w = y.shape[-2:]
    eps_abs = 0.0 if abs_tolerance is None else abs_tolerance
    denom = mask.indicator + rho * _laplacian_eigs(h, w)
    denom = np.where(denom > 0, denom, 1.0)
    rhs_data = mask.indicator * y

    x = kspace.adjoint(y, mask)
    z = _grad(x)
    u = np.zeros_like(z)
    objective = [_tv_objective(x, y, mask, alpha)]
    rising = 0
    converged = False
    r_norm = s_norm = float("nan")
    it = 0
    n_sqrt = np.sqrt(z.size)
    for it in range(1, config.max_iters + 1):
        rhs = rhs_data + rho * kspace.fft2c(_grad_adjoint(z - u))
        x = kspace.ifft2c(rhs / denom)
        dx = _grad(x)
        z_prev = z
        z = soft_threshold(dx + u, alpha / rho)
        u = u + dx - z
        f = _tv_objective(x, y, mask, alpha)
        if not np.isfinite(f):
            raise DivergenceError(f"cs_tv: non-finite objective at iteration {it}")
        rising = rising + 1 if f > objective[-1] else 0
        if rising >= 20:
            raise DivergenceError(f"cs_tv: objective increased for 20 iterations (at {it})")
        objective.append(f)
        r_norm = float(np.linalg.norm(dx - z))
        s_norm = float(rho * np.linalg.norm(_grad_adjoint(z - z_prev)))
        eps_pri = n_sqrt * eps_abs + config.tolerance * max(np.linalg.norm(dx), np.linalg.norm(z))
        eps_dual = np.sqrt(x.size) * eps_abs + config.tolerance * rho * np.linalg.norm(_grad_adjoint(u))
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
    return SolverResult(x, objective, it, converged, r_norm, s_norm)


def tune_weight(solver, y_list, x_list, mask, weights, base: SolverConfig):
    """Pick the weight with the best mean SNR on tuning pairs."""
    from .metrics import snr_db

    best, best_snr = None, -np.inf
    for wt in weights:
        cfg = SolverConfig(wt, base.max_iters, base.tolerance, base.rho, base.levels)
        s = np.mean([snr_db(x, solver(y, mask, cfg).image) for x, y in zip(x_list, y_list)])
        if s > best_snr:
            best, best_snr = wt, s
    return best, float(best_snr)
