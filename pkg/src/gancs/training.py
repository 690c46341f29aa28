"""Adversarial training of the reconstruction generator.

Discriminator cost: ``mean (1 - D(x))^2 + mean D(G(x_tilde))^2``.
Generator cost: ``dc + eta * pixel + lam * mean (1 - D(G(x_tilde)))^2`` where
``dc`` is the k-space residual energy and ``pixel`` the l1 (or squared l2)
distance to the ground truth in normalized intensity space. Sums over pixels
are divided by the pixel count so the weights do not depend on image size.

Each iteration draws a mini-batch, takes one discriminator step, then one
generator step, both with Adam.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kspace
from .data import Dataset, Normalization
from .networks import (
    Checkpoint,
    DiscriminatorConfig,
    GeneratorConfig,
    GeneratorOutput,
    ParamSet,
    build_discriminator,
    build_generator,
    discriminator_backward,
    discriminator_forward,
    generator_backward,
    generator_forward,
    save_checkpoint,
)

LOSS_MODES = ("gancs", "l1", "l2", "gan_only")
DC_MODES = ("soft", "hard", "interleaved")
CSV_HEADER = ["iter", "d_real", "d_fake", "g_gan", "g_l1", "g_dc", "g_total", "d_total", "lr"]


class NumericalError(FloatingPointError):
    """Training produced a non-finite value."""


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.1
    eta: float = 1.0
    batch_size: int = 8
    learning_rate: float = 1e-5
    lr_halve_every: int = 5000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 20
    iterations: int | None = None
    loss_mode: str = "gancs"
    dc_mode: str = "hard"
    warmup_iterations: int = 0
    checkpoint_every: int = 0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0 or self.eta < 0:
            raise ValueError("lam and eta must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization)")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.dc_mode not in DC_MODES:
            raise ValueError(f"dc_mode must be one of {DC_MODES}, got {self.dc_mode!r}")
        if self.learning_rate <= 0 or self.lr_halve_every < 1:
            raise ValueError("learning_rate must be positive and lr_halve_every >= 1")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be positive when given")

    def weights(self) -> tuple[float, float, float]:
        """Effective (dc, pixel, gan) weights for the configured loss mode."""
        if self.loss_mode == "gancs":
            return 1.0, self.eta, self.lam
        if self.loss_mode in ("l1", "l2"):
            return 0.0, self.eta, 0.0
        return 1.0, 0.0, self.lam


PRESETS = {
    # lambda as stated for the experimental setup; eta is not given there
    "paper-setup": dict(lam=0.1, eta=1.0),
    # lambda = eta = 10 as quoted with the reported reconstructions
    "paper-results": dict(lam=10.0, eta=10.0),
}


def preset(name: str, **overrides) -> TrainConfig:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update(overrides)
    return TrainConfig(**base)


def resolve_generator_config(g_config: GeneratorConfig, dc_mode: str) -> GeneratorConfig:
    """Apply the training dc_mode to the generator's data-consistency count."""
    if dc_mode == "soft":
        n = 0
    elif dc_mode == "hard":
        n = 1
    else:
        n = max(2, g_config.num_dc_blocks)
    return dataclasses.replace(g_config, num_dc_blocks=n)


@dataclass
class LossRecord:
    iteration: int
    d_loss_real: float
    d_loss_fake: float
    g_gan_loss: float
    g_l1_loss: float
    g_datacons_loss: float
    total_g: float
    total_d: float
    lr: float = 0.0

    def row(self) -> list:
        return [self.iteration, self.d_loss_real, self.d_loss_fake, self.g_gan_loss,
                self.g_l1_loss, self.g_datacons_loss, self.total_g, self.total_d, self.lr]


def learning_rate_at(cfg: TrainConfig, iteration: int) -> float:
    """Initial rate halved every ``lr_halve_every`` iterations (0-based)."""
    return cfg.learning_rate * 0.5 ** (iteration // cfg.lr_halve_every)


def adam_step(params: ParamSet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, t: int | None = None) -> ParamSet:
    """Bias-corrected Adam update of every parameter in place from ``params.grads``."""
    if t is None:
        params.step += 1
        t = params.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.values.items():
        g = params.grads[name]
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
    return params


# --- losses ------------------------------------------------------------------


@dataclass
class Batch:
    """Ground truth, k-space and zero-filled inputs for one mini-batch."""

    x: np.ndarray  # raw complex (B, H, W)
    y: np.ndarray
    x_tilde: np.ndarray
    target: np.ndarray  # normalized channels (B, 2, H, W)

    @classmethod
    def make(cls, x, y, mask, norm: Normalization, dtype=np.float32):
        x = np.asarray(x)
        y = np.asarray(y)
        return cls(x, y, kspace.adjoint(y, mask), norm.to_channels(x).astype(dtype))


def d_loss(d_params: ParamSet, d_config: DiscriminatorConfig, real, fake, update_stats=True):
    """Least-squares discriminator loss; gradients accumulate into ``d_params.grads``.

    ``fake`` is treated as a constant. Returns ``(total, real_term, fake_term)``.
    """
    real = np.asarray(real)
    fake = np.asarray(fake)
    if len(real) == 0 or len(fake) == 0:
        raise ValueError("d_loss needs non-empty real and fake batches")
    r = discriminator_forward(d_params, real, d_config, "train", update_stats)
    f = discriminator_forward(d_params, fake, d_config, "train", update_stats)
    real_term = float(np.mean((1.0 - r.scores.astype(np.float64)) ** 2))
    fake_term = float(np.mean(f.scores.astype(np.float64) ** 2))
    discriminator_backward(d_params, d_config, r, -2.0 * (1.0 - r.scores) / len(real))
    discriminator_backward(d_params, d_config, f, 2.0 * f.scores / len(fake))
    return real_term + fake_term, real_term, fake_term


@dataclass
class GLossTerms:
    dc: float
    pixel: float
    gan: float
    total: float
    grad_image: np.ndarray = field(repr=False)


def g_loss_terms(
    out: GeneratorOutput,
    batch: Batch,
    mask: kspace.SamplingMask,
    cfg: TrainConfig,
    d_params: ParamSet | None,
    d_config: DiscriminatorConfig | None,
    lam: float | None = None,
) -> GLossTerms:
    """Generator loss terms and the gradient w.r.t. the generator output image.

    D is frozen: its parameter gradients are not touched.
    """
    w_dc, w_pix, w_gan = cfg.weights()
    if lam is not None and w_gan:
        w_gan = lam
    b = len(batch.x)
    if b == 0:
        raise ValueError("g_loss needs a non-empty batch")
    img = out.image
    npix = img.shape[-1] * img.shape[-2]
    norm = out.context.norm
    grad = np.zeros(img.shape, dtype=np.float64)

    e = batch.y - kspace.forward(out.raw, mask)
    dc = float(np.sum(np.abs(e) ** 2) / (b * npix))
    if w_dc:
        ge = kspace.adjoint(e, mask)
        graw = np.stack([ge.real, ge.imag], axis=-3) * (-2.0 / (b * npix))
        grad += w_dc * graw / norm.scales().reshape(2, 1, 1)

    diff = img.astype(np.float64) - batch.target
    count = diff.size
    if cfg.loss_mode == "l2":
        pixel = float(np.sum(diff**2) / count)
        if w_pix:
            grad += w_pix * 2.0 * diff / count
    else:
        pixel = float(np.sum(np.abs(diff)) / count)
        if w_pix:
            grad += w_pix * np.sign(diff) / count

    gan = 0.0
    if cfg.loss_mode in ("gancs", "gan_only"):
        if w_gan and d_params is None:
            raise ValueError("a positive GAN weight needs discriminator parameters")
        if d_params is not None:
            res = discriminator_forward(d_params, img, d_config, "train", update_stats=False)
            s = res.scores.astype(np.float64)
            gan = float(np.mean((1.0 - s) ** 2))
            if w_gan:
                gs = -2.0 * w_gan * (1.0 - s) / b
                grad += _frozen_input_grad(d_params, d_config, res, gs)
    total = w_dc * dc + w_pix * pixel + w_gan * gan
    return GLossTerms(dc, pixel, gan, total, grad)


def _frozen_input_grad(d_params, d_config, res, grad_scores):
    """Input gradient of D without disturbing its accumulated parameter gradients."""
    saved = {k: g.copy() for k, g in d_params.grads.items()}
    gin = discriminator_backward(d_params, d_config, res, grad_scores)
    for k, g in saved.items():
        d_params.grads[k][...] = g
    return gin.astype(np.float64)


def g_loss(
    g_params: ParamSet,
    d_params: ParamSet | None,
    batch: Batch,
    mask: kspace.SamplingMask,
    g_config: GeneratorConfig,
    d_config: DiscriminatorConfig | None,
    cfg: TrainConfig,
    norm: Normalization,
    out: GeneratorOutput | None = None,
) -> GLossTerms:
    """Forward (unless ``out`` is given) and backward of the generator loss.

    Gradients accumulate into ``g_params.grads`` only.
    """
    if out is None:
        out = generator_forward(g_params, batch.x_tilde, batch.y, mask, g_config, norm, "train")
    terms = g_loss_terms(out, batch, mask, cfg, d_params, d_config)
    generator_backward(g_params, g_config, out, terms.grad_image)
    return terms


# --- training loop -----------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    records: list[LossRecord]
    checkpoint_path: Path | None = None


def _first_nonfinite(named: dict) -> str | None:
    for name, arr in named.items():
        if not np.all(np.isfinite(arr)):
            return name
    return None


def _write_csv_atomic(path: Path, records: list[LossRecord]) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".csv")
    with os.fdopen(fd, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow([r.iteration] + [repr(float(v)) for v in r.row()[1:]])
    os.replace(tmp, path)


def train(
    dataset: Dataset,
    mask: kspace.SamplingMask,
    g_config: GeneratorConfig,
    d_config: DiscriminatorConfig,
    cfg: TrainConfig,
    checkpoint_dir=None,
    hooks: Callable[[str, int], None] | None = None,
    on_record: Callable[[LossRecord], None] | None = None,
) -> TrainResult:
    """Mini-batch alternating minimization: S1 batch, S2 D step, S3 G step.

    Batches come from a per-epoch shuffle seeded by ``cfg.seed``. The run
    length is ``cfg.iterations`` when set, else ``epochs * (len // batch)``.
    """
    if len(dataset) < cfg.batch_size:
        raise ValueError(f"dataset has {len(dataset)} images, fewer than batch_size {cfg.batch_size}")
    if dataset.shape != mask.shape:
        raise ValueError(f"dataset images {dataset.shape} do not match mask {mask.shape}")
    g_config = resolve_generator_config(g_config, cfg.dc_mode)
    norm = dataset.normalization
    rng = np.random.default_rng(cfg.seed)
    g_params = build_generator(g_config, cfg.seed)
    d_params = build_discriminator(d_config, cfg.seed + 1)

    y_all = kspace.forward(dataset.images, mask)
    if cfg.noise_sigma > 0:
        y_all = kspace.add_noise(y_all, mask, cfg.noise_sigma, cfg.seed + 2)

    per_epoch = len(dataset) // cfg.batch_size
    total = cfg.iterations if cfg.iterations is not None else cfg.epochs * per_epoch
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = ckpt_dir / "checkpoint.gcsc" if ckpt_dir is not None else None

    def snapshot():
        return Checkpoint(g_config, d_config, norm, g_params, d_params)

    records: list[LossRecord] = []
    order = np.empty(0, dtype=int)
    use_gan = cfg.loss_mode in ("gancs", "gan_only")
    for it in range(total):
        # S1: mini-batch and generator output
        slot = it % per_epoch
        if slot == 0:
            order = rng.permutation(len(dataset))
        idx = np.sort(order[slot * cfg.batch_size : (slot + 1) * cfg.batch_size])
        batch = Batch.make(dataset.images[idx], y_all[idx], mask, norm)
        if hooks:
            hooks("S1", it)
        out = generator_forward(g_params, batch.x_tilde, batch.y, mask, g_config, norm, "train")
        lr = learning_rate_at(cfg, it)

        # S2: discriminator step on real vs current fakes
        d_total = d_real = d_fake = 0.0
        if use_gan:
            if hooks:
                hooks("S2", it)
            d_params.zero_grad()
            d_total, d_real, d_fake = d_loss(d_params, d_config, batch.target, out.image)
            bad = _first_nonfinite({f"d.grad[{k}]": v for k, v in d_params.grads.items()})
            if bad or not math.isfinite(d_total):
                raise NumericalError(f"iteration {it}: non-finite discriminator value in {bad or 'd_loss'}")
            adam_step(d_params, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        # S3: generator step against the updated discriminator
        if hooks:
            hooks("S3", it)
        g_params.zero_grad()
        lam = 0.0 if it < cfg.warmup_iterations else None
        terms = g_loss_terms(out, batch, mask, cfg, d_params if use_gan else None, d_config, lam)
        generator_backward(g_params, g_config, out, terms.grad_image)
        bad = _first_nonfinite({"g.output": out.image, **{f"g.grad[{k}]": v for k, v in g_params.grads.items()}})
        if bad or not math.isfinite(terms.total):
            raise NumericalError(f"iteration {it}: non-finite generator value in {bad or 'g_loss'}")
        adam_step(g_params, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        rec = LossRecord(it, d_real, d_fake, terms.gan, terms.pixel, terms.dc, terms.total, d_total, lr)
        records.append(rec)
        if on_record:
            on_record(rec)
        if ckpt_dir is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0 and it + 1 < total:
            save_checkpoint(snapshot(), ckpt_path)
            _write_csv_atomic(ckpt_dir / "losses.csv", records)

    ckpt = snapshot()
    if ckpt_dir is not None:
        save_checkpoint(ckpt, ckpt_path)
        _write_csv_atomic(ckpt_dir / "losses.csv", records)
    return TrainResult(ckpt, records, ckpt_path)
