"""Least-squares GAN game on finite supports.

With unlimited capacity the discriminator and generator act on probability
tables directly, so the optimal discriminator and the equilibrium can be
checked exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TabularDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "probs", p)

    @property
    def support_size(self) -> int:
        return self.probs.size

    @classmethod
    def random(cls, size: int, rng) -> "TabularDistribution":
        p = rng.random(size)
        p /= p.sum()
        # absorb rounding so the sum is 1 to within an ulp or two
        p[-1] = max(0.0, 1.0 - p[:-1].sum())
        return cls(p)


def _probs(p):
    return p.probs if isinstance(p, TabularDistribution) else np.asarray(p, dtype=np.float64)


def _pair(p_x, p_g):
    px, pg = _probs(p_x), _probs(p_g)
    if px.shape != pg.shape:
        raise ValueError(f"support sizes differ: {px.size} vs {pg.size}")
    return px, pg


def optimal_discriminator(p_x, p_g) -> np.ndarray:
    """``p_x / (p_x + p_g)`` elementwise; 0.5 where both vanish."""
    px, pg = _pair(p_x, p_g)
    total = px + pg
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(total > 0, px / np.where(total > 0, total, 1.0), 0.5)
    return d


def lsgan_d_objective(p_x, p_g, d) -> float:
    """``sum p_x (1 - d)^2 + sum p_g d^2``."""
    px, pg = _pair(p_x, p_g)
    d = np.asarray(d, dtype=np.float64)
    return float(np.sum(px * (1.0 - d) ** 2) + np.sum(pg * d**2))


def lsgan_g_objective(p_x, p_g, lam: float = 1.0) -> float:
    """Generator adversarial cost ``lam * sum p_g (1 - D*)^2`` against the optimal D."""
    px, pg = _pair(p_x, p_g)
    d = optimal_discriminator(px, pg)
    return float(lam * np.sum(pg * (1.0 - d) ** 2))


def pearson_chi2(p_x, p_g) -> float:
    """``sum (2 p_g - (p_x + p_g))^2 / (p_x + p_g)`` with 0/0 taken as 0."""
    px, pg = _pair(p_x, p_g)
    total = px + pg
    num = (2.0 * pg - total) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(total > 0, num / np.where(total > 0, total, 1.0), 0.0)
    return float(terms.sum())


def grid_optimal_discriminator(p_x, p_g, resolution: float = 1e-3) -> np.ndarray:
    """Brute-force minimizer of the discriminator objective over a grid in [0, 1].

    The objective is a sum of independent per-entry terms, so each entry is
    searched separately over the full grid.
    """
    px, pg = _pair(p_x, p_g)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    cost = px[:, None] * (1.0 - grid[None, :]) ** 2 + pg[:, None] * grid[None, :] ** 2
    return grid[np.argmin(cost, axis=1)]


def simplex_grid(size: int, steps: int) -> np.ndarray:
    """All probability vectors of length ``size`` with entries in multiples of ``1/steps``."""
    heads = [c for c in itertools.product(range(steps + 1), repeat=size - 1) if sum(c) <= steps]
    return np.array([list(c) + [steps - sum(c)] for c in heads], dtype=np.float64) / steps
