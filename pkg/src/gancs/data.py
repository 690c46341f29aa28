"""Synthetic phantoms, grayscale import, normalization and dataset storage."""

from __future__ import annotations

import glob
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics.tensorio import load_tensor, save_tensor

LOW, HIGH = 0.05, 0.95


@dataclass(frozen=True)
class Normalization:
    """Per-channel affine map ``v -> scale * v + offset`` on real and imaginary parts."""

    scale_re: float = 1.0
    offset_re: float = 0.0
    scale_im: float = 1.0
    offset_im: float = 0.0

    @classmethod
    def fit(cls, images) -> "Normalization":
        """Map observed min/max of each channel to 0.05/0.95."""
        images = np.asarray(images)
        return cls(*_fit_channel(images.real), *_fit_channel(images.imag))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.scale_re, self.offset_re, self.scale_im, self.offset_im)

    def scales(self) -> np.ndarray:
        return np.array([self.scale_re, self.scale_im])

    def offsets(self) -> np.ndarray:
        return np.array([self.offset_re, self.offset_im])

    def to_channels(self, z: np.ndarray) -> np.ndarray:
        """Complex (..., H, W) -> normalized real (..., 2, H, W)."""
        z = np.asarray(z)
        re = z.real * self.scale_re + self.offset_re
        im = z.imag * self.scale_im + self.offset_im
        return np.stack([re, im], axis=-3)

    def from_channels(self, ch: np.ndarray) -> np.ndarray:
        ch = np.asarray(ch, dtype=np.float64)
        re = (ch[..., 0, :, :] - self.offset_re) / self.scale_re
        im = (ch[..., 1, :, :] - self.offset_im) / self.scale_im
        return re + 1j * im


def _fit_channel(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12:
        # constant channel: map its value to the middle of the range
        return 1.0, 0.5 * (LOW + HIGH) - lo
    scale = (HIGH - LOW) / (hi - lo)
    return scale, LOW - scale * lo


def normalize(images, constants: Normalization) -> np.ndarray:
    images = np.asarray(images)
    return (images.real * constants.scale_re + constants.offset_re) + 1j * (
        images.imag * constants.scale_im + constants.offset_im
    )


def denormalize(images, constants: Normalization) -> np.ndarray:
    images = np.asarray(images)
    return (images.real - constants.offset_re) / constants.scale_re + 1j * (
        (images.imag - constants.offset_im) / constants.scale_im
    )


# --- phantoms ----------------------------------------------------------------


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 64
    num_shapes: tuple[int, int] = (5, 10)
    intensity_range: tuple[float, float] = (0.0, 1.0)
    phase_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.intensity_range
        if not lo < hi:
            raise ValueError(f"intensity_range must satisfy lo < hi, got {self.intensity_range}")
        if self.size < 16 or self.size % 4:
            raise ValueError(f"phantom size must be >= 16 and divisible by 4, got {self.size}")
        a, b = self.num_shapes
        if a < 1 or b < a:
            raise ValueError(f"invalid num_shapes range {self.num_shapes}")
        if self.phase_amplitude < 0:
            raise ValueError("phase_amplitude must be non-negative")


def gen_phantom(spec: PhantomSpec) -> np.ndarray:
    """Piecewise-constant ellipses and rectangles with a smooth polynomial phase.

    Shapes are painted in order over a background at the low end of the
    intensity range; the first shape is a large ellipse acting as the body.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.size
    lo, hi = spec.intensity_range
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    mag = np.full((n, n), lo, dtype=np.float64)
    count = int(rng.integers(spec.num_shapes[0], spec.num_shapes[1] + 1))
    for k in range(count):
        if k == 0:
            cy, cx = rng.uniform(-0.1, 0.1, 2)
            ry, rx = rng.uniform(0.6, 0.9, 2)
            theta = rng.uniform(0, np.pi)
            region = _ellipse(yy, xx, cy, cx, ry, rx, theta)
        elif rng.random() < 0.6:
            cy, cx = rng.uniform(-0.5, 0.5, 2)
            ry, rx = rng.uniform(0.08, 0.35, 2)
            theta = rng.uniform(0, np.pi)
            region = _ellipse(yy, xx, cy, cx, ry, rx, theta)
        else:
            cy, cx = rng.uniform(-0.5, 0.5, 2)
            hy, hx = rng.uniform(0.05, 0.3, 2)
            region = (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
        mag[region] = rng.uniform(lo, hi)

    if spec.phase_amplitude > 0:
        c = rng.uniform(-1.0, 1.0, 6)
        poly = c[0] + c[1] * xx + c[2] * yy + c[3] * xx * yy + c[4] * xx**2 + c[5] * yy**2
        peak = np.abs(poly).max()
        phase = spec.phase_amplitude * poly / peak if peak > 0 else np.zeros_like(poly)
        return mag * np.exp(1j * phase)
    return mag + 0j


def _ellipse(yy, xx, cy, cx, ry, rx, theta):
    ct, st = np.cos(theta), np.sin(theta)
    dy, dx = yy - cy, xx - cx
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0


# --- datasets ----------------------------------------------------------------


@dataclass
class Dataset:
    images: np.ndarray  # complex128, (count, H, W)
    ids: list[str]
    normalization: Normalization = field(default_factory=Normalization)
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.complex128)
        if self.images.ndim != 3:
            raise ValueError(f"dataset images must be (count, H, W), got {self.images.shape}")
        if len(self.ids) != len(self.images):
            raise ValueError("one id per image is required")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple[int, int]:
        return self.images.shape[1:]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=int)
        return Dataset(
            self.images[index], [self.ids[i] for i in index], self.normalization, dict(self.spec)
        )


def gen_dataset(spec: PhantomSpec, count: int, ids_per_group: int = 1) -> Dataset:
    """``count`` phantoms with seeds derived from ``spec.seed``, grouped into ids."""
    if count < 1 or ids_per_group < 1:
        raise ValueError("count and ids_per_group must be positive")
    seeds = np.random.SeedSequence(spec.seed).generate_state(count, dtype=np.uint64)
    images = np.stack(
        [
            gen_phantom(
                PhantomSpec(spec.size, spec.num_shapes, spec.intensity_range, spec.phase_amplitude, int(s))
            )
            for s in seeds
        ]
    )
    ids = [f"p{i // ids_per_group:05d}" for i in range(count)]
    meta = asdict(spec)
    meta["count"] = count
    meta["ids_per_group"] = ids_per_group
    return Dataset(images, ids, Normalization.fit(images), meta)


def import_grayscale(pattern: str, phase_mode: str = "zero", seed: int = 0, phase_amplitude: float = 0.5) -> Dataset:
    """Load 8/16-bit PGM files matching ``pattern`` as magnitude images.

    ``phase_mode="random"`` adds a smooth random polynomial phase per image.
    Each file gets its own id (the file stem).
    """
    from PIL import Image

    if phase_mode not in ("zero", "random"):
        raise ValueError(f"phase_mode must be 'zero' or 'random', got {phase_mode!r}")
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern!r}")
    rng = np.random.default_rng(seed)
    images, ids = [], []
    for p in paths:
        try:
            with Image.open(p) as im:
                im.load()
                mode = im.mode
                pix = np.asarray(im)
        except (OSError, ValueError, SyntaxError) as exc:
            raise OSError(f"cannot read {p}: {exc}") from exc
        if mode == "L":
            mag = pix.astype(np.float64) / 255.0
        elif mode.startswith("I"):
            mag = pix.astype(np.float64) / 65535.0
        else:
            raise OSError(f"{p}: unsupported image mode {mode!r}; expected 8/16-bit grayscale")
        if images and mag.shape != images[0].shape:
            raise OSError(f"{p}: shape {mag.shape} differs from {images[0].shape}")
        if phase_mode == "random":
            h, w = mag.shape
            yy, xx = np.meshgrid(np.linspace(-1, 1, h), np.linspace(-1, 1, w), indexing="ij")
            c = rng.uniform(-1, 1, 6)
            poly = c[0] + c[1] * xx + c[2] * yy + c[3] * xx * yy + c[4] * xx**2 + c[5] * yy**2
            images.append(mag * np.exp(1j * phase_amplitude * poly / np.abs(poly).max()))
        else:
            images.append(mag + 0j)
        ids.append(Path(p).stem)
    images = np.stack(images)
    return Dataset(images, ids, Normalization.fit(images), {"source": pattern, "phase_mode": phase_mode})


def split_by_id(dataset: Dataset, train_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Shuffle unique ids and assign whole groups to train or test."""
    if not 0.0 <= train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in [0, 1], got {train_fraction}")
    unique = sorted(set(dataset.ids))
    order = np.random.default_rng(seed).permutation(len(unique))
    n_train = int(round(train_fraction * len(unique)))
    train_ids = {unique[i] for i in order[:n_train]}
    train_idx = [i for i, g in enumerate(dataset.ids) if g in train_ids]
    test_idx = [i for i, g in enumerate(dataset.ids) if g not in train_ids]
    return dataset.subset(train_idx), dataset.subset(test_idx)


# --- persistence -------------------------------------------------------------

MANIFEST = "manifest.json"


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_dataset(dataset: Dataset, directory) -> Path:
    """Write one ``(2, H, W)`` float64 tensor file per image plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, img in enumerate(dataset.images):
        name = f"img_{i:06d}.gcst"
        save_tensor(directory / name, np.stack([img.real, img.imag]))
        files.append(name)
    manifest = {
        "format": "gancs-dataset",
        "version": 1,
        "count": len(dataset),
        "height": int(dataset.shape[0]),
        "width": int(dataset.shape[1]),
        "files": files,
        "ids": list(dataset.ids),
        "normalization": dict(zip(("scale_re", "offset_re", "scale_im", "offset_im"), dataset.normalization.as_tuple())),
        "spec": dataset.spec,
    }
    _atomic_write_text(directory / MANIFEST, json.dumps(manifest, indent=2, default=_jsonable))
    return directory


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"no dataset manifest in {directory}") from exc
    images = []
    for name in manifest["files"]:
        t = load_tensor(directory / name)
        if t.ndim != 3 or t.shape[0] != 2:
            raise ValueError(f"{directory / name}: expected (2, H, W) tensor, got {t.shape}")
        images.append(t[0] + 1j * t[1])
    images = np.stack(images) if images else np.zeros((0, manifest["height"], manifest["width"]), complex)
    return Dataset(images, list(manifest["ids"]), Normalization(**manifest["normalization"]), manifest.get("spec", {}))
