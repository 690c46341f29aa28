"""Residual generator and strided CNN discriminator built on ``gancs.numerics``.

Networks operate on 2-channel (real, imaginary) images in normalized
intensity space. Data-consistency layers map back to raw intensities with
the stored :class:`~gancs.data.Normalization`, apply the hard k-space
projection, and map forward again; the projection is linear, so its
backward pass is the nullspace projection of the incoming gradient.
"""

from __future__ import annotations

import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kspace
from .data import Normalization
from .numerics import ops
from .numerics.tensorio import read_tensor, write_tensor


@dataclass(frozen=True)
class GeneratorConfig:
    num_residual_blocks: int = 8
    feature_maps: int = 64
    num_dc_blocks: int = 1
    output_activation: str = "sigmoid"

    def __post_init__(self):
        if self.num_residual_blocks < 1:
            raise ValueError("num_residual_blocks must be >= 1")
        if self.feature_maps < 1:
            raise ValueError("feature_maps must be >= 1")
        if self.num_dc_blocks < 0:
            raise ValueError("num_dc_blocks must be >= 0")
        if self.output_activation not in ("sigmoid", "identity"):
            raise ValueError(f"unknown output_activation {self.output_activation!r}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    num_layers: int = 8
    base_feature_maps: int = 8
    stride2_layers: int = 4

    def __post_init__(self):
        if self.num_layers < 3:
            raise ValueError("num_layers must be >= 3")
        if self.base_feature_maps < 1:
            raise ValueError("base_feature_maps must be >= 1")
        if not 0 <= self.stride2_layers <= self.num_layers - 2:
            raise ValueError("stride2_layers must leave the two 1x1 layers at stride 1")


class ParamSet:
    """Ordered named parameters with gradient and Adam moment buffers.

    ``buffers`` holds non-trainable state (batch-norm running statistics).
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.adam_m: dict[str, np.ndarray] = {}
        self.adam_v: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.values or name in self.buffers:
            raise ValueError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=self.dtype, order="C", copy=True)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.adam_m[name] = np.zeros_like(value)
        self.adam_v[name] = np.zeros_like(value)

    def add_buffer(self, name: str, value: np.ndarray) -> None:
        if name in self.values or name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        self.buffers[name] = np.array(value, dtype=self.dtype, order="C", copy=True)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name] if name in self.values else self.buffers[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values or name in self.buffers

    def names(self) -> list[str]:
        return list(self.values)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def tensors(self) -> dict[str, np.ndarray]:
        """Parameters followed by buffers, in insertion order."""
        out = dict(self.values)
        out.update(self.buffers)
        return out

    def astype(self, dtype) -> "ParamSet":
        ps = ParamSet(dtype)
        for k, v in self.values.items():
            ps.add(k, v)
        for k, v in self.buffers.items():
            ps.add_buffer(k, v)
        return ps

    def copy(self) -> "ParamSet":
        ps = self.astype(self.dtype)
        for k in self.values:
            ps.adam_m[k][...] = self.adam_m[k]
            ps.adam_v[k][...] = self.adam_v[k]
        ps.step = self.step
        return ps

    def set_all(self, value: float) -> None:
        for v in self.values.values():
            v.fill(value)


# --- layers ------------------------------------------------------------------


@dataclass
class Context:
    """Per-call inputs needed by data-consistency layers."""

    y: np.ndarray | None = None
    mask: kspace.SamplingMask | None = None
    norm: Normalization = field(default_factory=Normalization)
    mode: str = "train"
    update_stats: bool = True
    use_ext: bool | None = None
    last_raw: np.ndarray | None = None


class Conv:
    def __init__(self, name, c_in, c_out, k, stride=1):
        self.name, self.c_in, self.c_out, self.k, self.stride = name, c_in, c_out, k, stride

    def init(self, ps: ParamSet, rng):
        fan_in = self.c_in * self.k * self.k
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), (self.c_out, self.c_in, self.k, self.k))
        ps.add(f"{self.name}.weight", w)
        ps.add(f"{self.name}.bias", np.zeros(self.c_out))

    def forward(self, ps, x, ctx):
        out = ops.conv2d_forward(
            x, ps[f"{self.name}.weight"], ps[f"{self.name}.bias"], self.stride, "same", ctx.use_ext
        )
        return out, x

    def backward(self, ps, cache, g, ctx):
        lg = ops.conv2d_backward(cache, ps[f"{self.name}.weight"], self.stride, "same", g, ctx.use_ext)
        ps.grads[f"{self.name}.weight"] += lg.param_grads["weight"]
        ps.grads[f"{self.name}.bias"] += lg.param_grads["bias"]
        return lg.input_grad


class BatchNorm:
    def __init__(self, name, channels):
        self.name, self.channels = name, channels

    def init(self, ps: ParamSet, rng):
        ps.add(f"{self.name}.gamma", np.ones(self.channels))
        ps.add(f"{self.name}.beta", np.zeros(self.channels))
        ps.add_buffer(f"{self.name}.running_mean", np.zeros(self.channels))
        ps.add_buffer(f"{self.name}.running_var", np.ones(self.channels))

    def _state(self, ps):
        return ops.BatchNormState(ps[f"{self.name}.running_mean"], ps[f"{self.name}.running_var"])

    def forward(self, ps, x, ctx):
        state = self._state(ps) if (ctx.mode == "inference" or ctx.update_stats) else None
        out = ops.batchnorm_forward(
            x, ps[f"{self.name}.gamma"], ps[f"{self.name}.beta"], ctx.mode, state, ctx.use_ext
        )
        return out, x

    def backward(self, ps, cache, g, ctx):
        lg = ops.batchnorm_backward(
            cache, ps[f"{self.name}.gamma"], g, ctx.mode, self._state(ps), ctx.use_ext
        )
        ps.grads[f"{self.name}.gamma"] += lg.param_grads["gamma"]
        ps.grads[f"{self.name}.beta"] += lg.param_grads["beta"]
        return lg.input_grad


class ReLU:
    def init(self, ps, rng):
        pass

    def forward(self, ps, x, ctx):
        return ops.relu(x), x

    def backward(self, ps, cache, g, ctx):
        return ops.relu_backward(cache, g)


class Sigmoid:
    def init(self, ps, rng):
        pass

    def forward(self, ps, x, ctx):
        return ops.sigmoid(x), x

    def backward(self, ps, cache, g, ctx):
        return ops.sigmoid_backward(cache, g)


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, ps, rng):
        for layer in self.layers:
            layer.init(ps, rng)

    def forward(self, ps, x, ctx):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(ps, x, ctx)
            caches.append(c)
        return x, caches

    def backward(self, ps, caches, g, ctx):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            g = layer.backward(ps, c, g, ctx)
        return g


class Residual(Sequential):
    """``x + F(x)`` with F = conv-BN-ReLU-conv-BN."""

    def __init__(self, name, channels):
        super().__init__([
            Conv(f"{name}.conv1", channels, channels, 3),
            BatchNorm(f"{name}.bn1", channels),
            ReLU(),
            Conv(f"{name}.conv2", channels, channels, 3),
            BatchNorm(f"{name}.bn2", channels),
        ])

    def forward(self, ps, x, ctx):
        out, caches = super().forward(ps, x, ctx)
        return x + out, caches

    def backward(self, ps, caches, g, ctx):
        return g + super().backward(ps, caches, g, ctx)


def dc_project_channels(z, ctx: Context):
    """Hard projection of normalized 2-channel images onto ``{x : M F x = y}``.

    Returns the projected normalized channels and the projected raw complex images.
    """
    raw = ctx.norm.from_channels(z)
    projected = kspace.project_data_consistent(raw, ctx.y, ctx.mask)
    return ctx.norm.to_channels(projected).astype(z.dtype), projected


def dc_project_backward(g, ctx: Context):
    scales = ctx.norm.scales().reshape(2, 1, 1)
    gs = g.astype(np.float64) * scales
    pg = kspace.nullspace_project(gs[..., 0, :, :] + 1j * gs[..., 1, :, :], ctx.mask)
    return (np.stack([pg.real, pg.imag], axis=-3) / scales).astype(g.dtype)


class DataConsistency:
    def init(self, ps, rng):
        pass

    def forward(self, ps, x, ctx):
        out, raw = dc_project_channels(x, ctx)
        ctx.last_raw = raw
        return out, None

    def backward(self, ps, cache, g, ctx):
        return dc_project_backward(g, ctx)


class InterleavedDC:
    """Read a 2-channel estimate off the features, project it, re-inject the correction.

    ``features + inject(P(head(features)) - head(features))``
    """

    def __init__(self, name, channels):
        self.head = Conv(f"{name}.head", channels, 2, 1)
        self.inject = Conv(f"{name}.inject", 2, channels, 1)

    def init(self, ps, rng):
        self.head.init(ps, rng)
        self.inject.init(ps, rng)

    def forward(self, ps, x, ctx):
        z, c_head = self.head.forward(ps, x, ctx)
        zp, _ = dc_project_channels(z, ctx)
        corr = zp - z
        out, c_inj = self.inject.forward(ps, corr, ctx)
        return x + out, (c_head, c_inj)

    def backward(self, ps, cache, g, ctx):
        c_head, c_inj = cache
        g_corr = self.inject.backward(ps, c_inj, g, ctx)
        g_z = dc_project_backward(g_corr, ctx) - g_corr
        return g + self.head.backward(ps, c_head, g_z, ctx)


def interleave_positions(config: GeneratorConfig) -> list[int]:
    """Residual-block indices after which an interleaved DC stage runs.

    ``num_dc_blocks`` counts every projection, the final one included, so
    ``num_dc_blocks - 1`` stages are spread every ``ceil(R / num_dc_blocks)``
    blocks.
    """
    k = config.num_dc_blocks
    r = config.num_residual_blocks
    if k <= 1:
        return []
    every = math.ceil(r / k)
    pos = [j for j in range(r) if (j + 1) % every == 0 and j + 1 < r]
    return pos[: k - 1]


def generator_layers(config: GeneratorConfig) -> Sequential:
    f = config.feature_maps
    layers: list = [Conv("g.in", 2, f, 3)]
    inter = set(interleave_positions(config))
    for b in range(config.num_residual_blocks):
        layers.append(Residual(f"g.res{b}", f))
        if b in inter:
            layers.append(InterleavedDC(f"g.dc{b}", f))
    layers += [
        Conv("g.tail1", f, f, 1), ReLU(),
        Conv("g.tail2", f, f, 1), ReLU(),
        Conv("g.tail3", f, 2, 1),
    ]
    if config.output_activation == "sigmoid":
        layers.append(Sigmoid())
    if config.num_dc_blocks >= 1:
        layers.append(DataConsistency())
    return Sequential(layers)


def discriminator_layers(config: DiscriminatorConfig) -> Sequential:
    layers: list = []
    c_in = 2
    n = config.num_layers
    for i in range(n):
        last = i == n - 1
        k = 1 if i >= n - 2 else 3
        stride = 2 if i < config.stride2_layers else 1
        c_out = 1 if last else config.base_feature_maps * 2 ** min(i, max(config.stride2_layers - 1, 0))
        layers.append(Conv(f"d.conv{i + 1}", c_in, c_out, k, stride))
        if not last:
            layers += [BatchNorm(f"d.bn{i + 1}", c_out), ReLU()]
        c_in = c_out
    return Sequential(layers)


def build_generator(config: GeneratorConfig, seed: int = 0, dtype=np.float32) -> ParamSet:
    """He-initialized generator parameters; deterministic per seed."""
    ps = ParamSet(dtype)
    generator_layers(config).init(ps, np.random.default_rng(seed))
    return ps


def build_discriminator(config: DiscriminatorConfig, seed: int = 0, dtype=np.float32) -> ParamSet:
    ps = ParamSet(dtype)
    discriminator_layers(config).init(ps, np.random.default_rng(seed))
    return ps


@dataclass
class GeneratorOutput:
    image: np.ndarray  # normalized channels (N, 2, H, W)
    raw: np.ndarray  # complex images in raw intensity units (N, H, W)
    cache: list
    context: Context


def generator_forward(
    params: ParamSet,
    x_tilde: np.ndarray,
    y: np.ndarray,
    mask: kspace.SamplingMask,
    config: GeneratorConfig,
    norm: Normalization | None = None,
    mode: str = "train",
    use_ext: bool | None = None,
) -> GeneratorOutput:
    """Run G on zero-filled images ``x_tilde`` (complex, (N, H, W)).

    ``x_tilde`` must equal ``adjoint(y, mask)``; it is taken as given. When
    the config has a final data-consistency stage, ``raw`` is the exactly
    projected double-precision image.
    """
    x_tilde = np.asarray(x_tilde)
    if x_tilde.ndim == 2:
        x_tilde = x_tilde[None]
        y = np.asarray(y)[None]
    if x_tilde.shape[-2:] != mask.shape:
        raise ValueError(f"image shape {x_tilde.shape[-2:]} does not match mask {mask.shape}")
    y = np.asarray(y)
    if y.shape != x_tilde.shape:
        raise ValueError(f"k-space batch {y.shape} does not match image batch {x_tilde.shape}")
    ctx = Context(y=y, mask=mask, norm=norm or Normalization(), mode=mode, use_ext=use_ext)
    x = ctx.norm.to_channels(x_tilde).astype(params.dtype)
    net = generator_layers(config)
    out, caches = net.forward(params, x, ctx)
    raw = ctx.last_raw if config.num_dc_blocks >= 1 else ctx.norm.from_channels(out)
    return GeneratorOutput(out, raw, caches, ctx)


def relu_inputs(net: Sequential, caches: list) -> list[np.ndarray]:
    """Pre-activation arrays of every ReLU in a forward trace."""
    found = []
    for layer, cache in zip(net.layers, caches):
        if isinstance(layer, ReLU):
            found.append(cache)
        elif isinstance(layer, Sequential):
            found += relu_inputs(layer, cache)
    return found


def kink_signature(net: Sequential, caches: list) -> np.ndarray:
    """Sign pattern of all ReLU inputs; changes when a perturbation crosses a kink."""
    parts = [np.ravel(a) > 0 for a in relu_inputs(net, caches)]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=bool)


def generator_backward(params: ParamSet, config: GeneratorConfig, result: GeneratorOutput, grad_image) -> np.ndarray:
    """Accumulate parameter gradients into ``params.grads``; returns the input gradient."""
    net = generator_layers(config)
    return net.backward(params, result.cache, np.asarray(grad_image, dtype=params.dtype), result.context)


@dataclass
class DiscriminatorOutput:
    scores: np.ndarray
    cache: list
    context: Context
    pre_mean: np.ndarray


def discriminator_forward(
    params: ParamSet,
    x: np.ndarray,
    config: DiscriminatorConfig,
    mode: str = "train",
    update_stats: bool = True,
    use_ext: bool | None = None,
) -> DiscriminatorOutput:
    """Score normalized 2-channel images; returns one unbounded scalar per sample."""
    x = np.asarray(x, dtype=params.dtype)
    if x.ndim != 4 or x.shape[1] != 2:
        raise ValueError(f"discriminator expects (N, 2, H, W), got {x.shape}")
    ctx = Context(mode=mode, update_stats=update_stats, use_ext=use_ext)
    out, caches = discriminator_layers(config).forward(params, x, ctx)
    return DiscriminatorOutput(ops.spatial_mean(out), caches, ctx, out)


def discriminator_backward(params: ParamSet, config: DiscriminatorConfig, result: DiscriminatorOutput, grad_scores) -> np.ndarray:
    g = ops.spatial_mean_backward(result.pre_mean, np.asarray(grad_scores, dtype=params.dtype))
    return discriminator_layers(config).backward(params, result.cache, np.ascontiguousarray(g), result.context)


def reconstruct(
    params: ParamSet,
    y: np.ndarray,
    mask: kspace.SamplingMask,
    config: GeneratorConfig,
    norm: Normalization,
    batch_size: int = 8,
    use_ext: bool | None = None,
) -> np.ndarray:
    """Inference-mode reconstruction of k-space batch ``y``; returns raw complex images."""
    y = np.asarray(y)
    single = y.ndim == 2
    if single:
        y = y[None]
    outs = []
    for start in range(0, len(y), batch_size):
        yb = y[start : start + batch_size]
        res = generator_forward(params, kspace.adjoint(yb, mask), yb, mask, config, norm, "inference", use_ext)
        outs.append(res.raw)
    out = np.concatenate(outs)
    return out[0] if single else out


# --- checkpoints -------------------------------------------------------------

CKPT_MAGIC = b"GCSC"
CKPT_VERSION = 1
_ACTIVATIONS = ("sigmoid", "identity")


@dataclass
class Checkpoint:
    g_config: GeneratorConfig
    d_config: DiscriminatorConfig
    normalization: Normalization
    g_params: ParamSet
    d_params: ParamSet


def _write_params(buf, prefix: str, ps: ParamSet) -> None:
    tensors = ps.tensors()
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        encoded = f"{prefix}{name}".encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        write_tensor(buf, arr)


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    g, d = ckpt.g_config, ckpt.d_config
    buf.write(struct.pack("<4sH", CKPT_MAGIC, CKPT_VERSION))
    buf.write(struct.pack("<IIIB", g.num_residual_blocks, g.feature_maps, g.num_dc_blocks,
                          _ACTIVATIONS.index(g.output_activation)))
    buf.write(struct.pack("<III", d.num_layers, d.base_feature_maps, d.stride2_layers))
    buf.write(struct.pack("<4d", *ckpt.normalization.as_tuple()))
    _write_params(buf, "", ckpt.g_params)
    _write_params(buf, "", ckpt.d_params)
    return buf.getvalue()


def _read(buf, fmt):
    size = struct.calcsize(fmt)
    data = buf.read(size)
    if len(data) != size:
        raise ValueError("truncated checkpoint")
    return struct.unpack(fmt, data)


def _read_params(buf, template: ParamSet) -> ParamSet:
    (count,) = _read(buf, "<I")
    loaded = {}
    for _ in range(count):
        (n,) = _read(buf, "<H")
        name = buf.read(n).decode("utf-8")
        loaded[name] = read_tensor(buf)
    expected = template.tensors()
    if set(loaded) != set(expected):
        raise ValueError("checkpoint tensors do not match the stored network configuration")
    dtype = next(iter(loaded.values())).dtype if loaded else np.float32
    ps = ParamSet(dtype)
    for name in template.values:
        if loaded[name].shape != expected[name].shape:
            raise ValueError(f"tensor {name} has shape {loaded[name].shape}, expected {expected[name].shape}")
        ps.add(name, loaded[name])
    for name in template.buffers:
        ps.add_buffer(name, loaded[name])
    return ps


def checkpoint_from_bytes(blob: bytes) -> Checkpoint:
    buf = io.BytesIO(blob)
    magic, version = _read(buf, "<4sH")
    if magic != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    nrb, fm, ndc, act = _read(buf, "<IIIB")
    if act >= len(_ACTIVATIONS):
        raise ValueError(f"unknown output activation code {act}")
    g_config = GeneratorConfig(nrb, fm, ndc, _ACTIVATIONS[act])
    d_config = DiscriminatorConfig(*_read(buf, "<III"))
    norm = Normalization(*_read(buf, "<4d"))
    g_params = _read_params(buf, build_generator(g_config))
    d_params = _read_params(buf, build_discriminator(d_config))
    return Checkpoint(g_config, d_config, norm, g_params, d_params)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".gcsc")
    with os.fdopen(fd, "wb") as fh:
        fh.write(checkpoint_to_bytes(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())
