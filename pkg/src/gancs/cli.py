"""Command-line interface.

Every command reads a flat ``key = value`` config file (``--config``), applies
command-line overrides, and writes the fully resolved config as
``config.resolved`` into its output directory. Re-running the same command
with ``--config <out>/config.resolved`` reproduces the run.

Exit codes: 0 success, 2 invalid arguments or config, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baselines, checks, kspace
from .data import Dataset, Normalization, PhantomSpec, gen_dataset, load_dataset, save_dataset, split_by_id
from .metrics import MetricReport, evaluate
from .networks import DiscriminatorConfig, GeneratorConfig, load_checkpoint, reconstruct
from .numerics import load_tensor
from .training import PRESETS, NumericalError, TrainConfig, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class InputError(OSError):
    """An input file exists but could not be decoded."""


# Every recognized key with its default; the default's type is the key's type.
DEFAULTS: dict[str, object] = {
    "seed": 0,
    "threads": 1,
    "out": "out",
    # sampling mask
    "height": 64,
    "width": 64,
    "sampling_fraction": 0.2,
    "density_power": 3.0,
    "mask": "",
    # phantoms
    "count": 100,
    "num_shapes_min": 5,
    "num_shapes_max": 10,
    "intensity_min": 0.0,
    "intensity_max": 1.0,
    "phase_amplitude": 0.0,
    "ids_per_group": 1,
    # inputs
    "dataset": "",
    "checkpoint": "",
    "kspace": "",
    "method": "zf",
    "recon_dirs": "",
    # training
    "preset": "",
    "lam": 0.1,
    "eta": 1.0,
    "batch_size": 8,
    "learning_rate": 1e-5,
    "lr_halve_every": 5000,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "epochs": 20,
    "iterations": 0,
    "loss_mode": "gancs",
    "dc_mode": "hard",
    "warmup_iterations": 0,
    "checkpoint_every": 0,
    "noise_sigma": 0.0,
    "log_every": 100,
    # generator / discriminator
    "num_residual_blocks": 8,
    "feature_maps": 64,
    "num_dc_blocks": 1,
    "output_activation": "sigmoid",
    "num_layers": 8,
    "base_feature_maps": 8,
    "stride2_layers": 4,
    # classical solvers
    "regularization_weight": 1e-3,
    "max_iters": 300,
    "tolerance": 1e-6,
    "rho": 1.0,
    "levels": 3,
    # evaluation and studies
    "crop": 50,
    "fractions": "0.1,0.25,0.5,1.0",
    "train_fraction": 0.8,
    "gradcheck_seed": checks.HARNESS_SEED,
}

COMMANDS = ("mask-gen", "phantom-gen", "train", "reconstruct", "baseline", "evaluate", "gradcheck", "datasize-study")


# --- config ------------------------------------------------------------------


def _coerce(key: str, raw) -> object:
    default = DEFAULTS[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return text


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def resolve_config(file_values: dict, flag_values: dict) -> dict[str, object]:
    """defaults < preset < config file < command-line flags."""
    explicit = {**file_values, **flag_values}
    cfg = dict(DEFAULTS)
    name = explicit.get("preset", "")
    if name:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        cfg.update(PRESETS[name])
    cfg.update(explicit)
    return cfg


def format_config(cfg: dict, command: str) -> str:
    lines = [f"# gancs {__version__} {command}"]
    lines += [f"{k} = {cfg[k]!r}" if isinstance(cfg[k], float) else f"{k} = {cfg[k]}" for k in DEFAULTS]
    return "\n".join(lines) + "\n"


def write_resolved(cfg: dict, command: str, out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.resolved"
    path.write_text(format_config(cfg, command))
    return path


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        lam=cfg["lam"], eta=cfg["eta"], batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
        lr_halve_every=cfg["lr_halve_every"], adam_beta1=cfg["adam_beta1"], adam_beta2=cfg["adam_beta2"],
        adam_eps=cfg["adam_eps"], epochs=cfg["epochs"], iterations=cfg["iterations"] or None,
        loss_mode=cfg["loss_mode"], dc_mode=cfg["dc_mode"], warmup_iterations=cfg["warmup_iterations"],
        checkpoint_every=cfg["checkpoint_every"], noise_sigma=cfg["noise_sigma"], seed=cfg["seed"],
    )


def generator_config(cfg: dict) -> GeneratorConfig:
    return GeneratorConfig(cfg["num_residual_blocks"], cfg["feature_maps"], cfg["num_dc_blocks"], cfg["output_activation"])


def discriminator_config(cfg: dict) -> DiscriminatorConfig:
    return DiscriminatorConfig(cfg["num_layers"], cfg["base_feature_maps"], cfg["stride2_layers"])


def solver_config(cfg: dict) -> baselines.SolverConfig:
    return baselines.SolverConfig(cfg["regularization_weight"], cfg["max_iters"], cfg["tolerance"], cfg["rho"], cfg["levels"])


# --- helpers -----------------------------------------------------------------


def _need(cfg: dict, key: str) -> str:
    if not cfg[key]:
        raise ConfigError(f"'{key}' is required for this command")
    return str(cfg[key])


def _load_dataset(path: str) -> Dataset:
    try:
        return load_dataset(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read dataset {path}: {exc}") from exc


def _mask_for(cfg: dict, shape) -> kspace.SamplingMask:
    if cfg["mask"]:
        try:
            mask = kspace.load_mask(cfg["mask"])
        except ValueError as exc:
            raise InputError(f"cannot read mask {cfg['mask']}: {exc}") from exc
    else:
        mask = kspace.make_vardens_mask(shape[0], shape[1], cfg["sampling_fraction"], cfg["density_power"], cfg["seed"])
    if mask.shape != tuple(shape):
        raise ConfigError(f"mask shape {mask.shape} does not match images {tuple(shape)}")
    return mask


def _image_shape(cfg: dict) -> tuple[int, int]:
    if cfg["dataset"]:
        return _load_dataset(cfg["dataset"]).shape
    return cfg["height"], cfg["width"]


def write_pgm(path: Path, image: np.ndarray, peak: float | None = None) -> None:
    """8-bit magnitude graymap, scaled so ``peak`` (default: the image max) maps to 255."""
    from PIL import Image

    mag = np.abs(np.asarray(image))
    peak = float(mag.max()) if peak is None else peak
    scaled = np.zeros_like(mag) if peak <= 0 else np.clip(mag / peak, 0.0, 1.0)
    Image.fromarray(np.round(scaled * 255).astype(np.uint8), mode="L").save(path, format="PPM")


def _measurements(cfg: dict, mask):
    """K-space batch plus optional reference dataset for reconstruct/baseline."""
    reference = _load_dataset(cfg["dataset"]) if cfg["dataset"] else None
    if cfg["kspace"]:
        try:
            t = load_tensor(cfg["kspace"])
        except ValueError as exc:
            raise InputError(f"cannot read k-space tensor {cfg['kspace']}: {exc}") from exc
        if t.ndim == 3:
            t = t[None]
        if t.ndim != 4 or t.shape[1] != 2:
            raise ConfigError(f"k-space tensor must be (N, 2, H, W) or (2, H, W), got {t.shape}")
        y = t[:, 0] + 1j * t[:, 1]
        ids = reference.ids if reference is not None and len(reference) == len(y) else [f"k{i:05d}" for i in range(len(y))]
        return y, ids, reference
    if reference is None:
        raise ConfigError("either 'kspace' or 'dataset' is required")
    y = kspace.forward(reference.images, mask)
    if cfg["noise_sigma"] > 0:
        y = kspace.add_noise(y, mask, cfg["noise_sigma"], cfg["seed"] + 2)
    return y, reference.ids, reference


def _emit_recons(out: Path, method: str, images, ids, times, reference, crop, norm_source) -> dict:
    """Write a recon dataset, graymaps and metrics.json; return the metrics dict."""
    images = np.asarray(images)
    norm = norm_source.normalization if norm_source is not None else Normalization.fit(images)
    recon = Dataset(images, list(ids), norm)
    save_dataset(recon, out / "recon")
    pgm_dir = out / "images"
    pgm_dir.mkdir(parents=True, exist_ok=True)
    per_image = []
    for i, img in enumerate(recon.images):
        peak = float(np.abs(reference.images[i]).max()) if reference is not None else None
        write_pgm(pgm_dir / f"{i:05d}_{ids[i]}.pgm", img, peak)
        entry = {"index": i, "id": ids[i], "recon_time_seconds": times[i]}
        if reference is not None:
            entry.update(json.loads(evaluate(reference.images[i], img, crop, times[i]).to_json()))
        per_image.append(entry)
    metrics = {"method": method, "count": len(per_image), "per_image": per_image}
    if reference is not None:
        mean = MetricReport(
            float(np.mean([e["snr_db"] for e in per_image])),
            float(np.mean([e["ssim"] for e in per_image])),
            float(np.mean([e["nrmse"] for e in per_image])),
            float(np.mean(times)),
        )
        metrics["mean"] = json.loads(mean.to_json())
    else:
        metrics["mean"] = {"recon_time_seconds": float(np.mean(times))}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    return metrics


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


# --- commands ----------------------------------------------------------------


def cmd_mask_gen(cfg: dict, out: Path) -> int:
    mask = kspace.make_vardens_mask(cfg["height"], cfg["width"], cfg["sampling_fraction"], cfg["density_power"], cfg["seed"])
    out.mkdir(parents=True, exist_ok=True)
    kspace.save_mask(mask, out / "mask.gcsm")
    write_pgm(out / "mask.pgm", mask.indicator, 1.0)
    print(f"mask {mask.height}x{mask.width}: {mask.count} samples ({mask.count / mask.indicator.size:.4f}) -> {out / 'mask.gcsm'}")
    return EXIT_OK


def cmd_phantom_gen(cfg: dict, out: Path) -> int:
    if cfg["height"] != cfg["width"]:
        raise ConfigError("phantoms are square; set height = width")
    spec = PhantomSpec(
        cfg["height"], (cfg["num_shapes_min"], cfg["num_shapes_max"]),
        (cfg["intensity_min"], cfg["intensity_max"]), cfg["phase_amplitude"], cfg["seed"],
    )
    ds = gen_dataset(spec, cfg["count"], cfg["ids_per_group"])
    save_dataset(ds, out)
    previews = out / "images"
    previews.mkdir(exist_ok=True)
    for i in range(min(8, len(ds))):
        write_pgm(previews / f"{i:05d}_{ds.ids[i]}.pgm", ds.images[i])
    print(f"{len(ds)} phantoms {spec.size}x{spec.size} -> {out}")
    return EXIT_OK


def cmd_train(cfg: dict, out: Path) -> int:
    ds = _load_dataset(_need(cfg, "dataset"))
    mask = _mask_for(cfg, ds.shape)
    tc = train_config(cfg)
    out.mkdir(parents=True, exist_ok=True)
    kspace.save_mask(mask, out / "mask.gcsm")
    every = cfg["log_every"]

    def on_record(r):
        if every and (r.iteration % every == 0):
            _log(f"iter {r.iteration:6d}  g_total {r.total_g:.5g}  g_l1 {r.g_l1_loss:.5g}  "
                 f"g_gan {r.g_gan_loss:.5g}  d_total {r.total_d:.5g}  lr {r.lr:.3g}")

    t0 = time.perf_counter()
    result = train(ds, mask, generator_config(cfg), discriminator_config(cfg), tc, out, on_record=on_record)
    print(f"trained {len(result.records)} iterations in {time.perf_counter() - t0:.1f}s -> {result.checkpoint_path}")
    return EXIT_OK


def cmd_reconstruct(cfg: dict, out: Path) -> int:
    path = _need(cfg, "checkpoint")
    try:
        ckpt = load_checkpoint(path)
    except (ValueError, struct.error) as exc:
        raise InputError(f"cannot read checkpoint {path}: {exc}") from exc
    mask = _mask_for(cfg, _image_shape(cfg))
    y, ids, reference = _measurements(cfg, mask)
    images, times = [], []
    for yi in y:
        t0 = time.perf_counter()
        images.append(reconstruct(ckpt.g_params, yi, mask, ckpt.g_config, ckpt.normalization))
        times.append(time.perf_counter() - t0)
    metrics = _emit_recons(out, "gancs", images, ids, times, reference, cfg["crop"], reference)
    _print_summary("gancs", metrics)
    return EXIT_OK


_SOLVERS = {"zf": None, "cs-wv": baselines.cs_wavelet, "cs-tv": baselines.cs_tv}


def cmd_baseline(cfg: dict, out: Path) -> int:
    method = cfg["method"]
    if method not in _SOLVERS:
        raise ConfigError(f"method must be one of {sorted(_SOLVERS)}, got {method!r}")
    mask = _mask_for(cfg, _image_shape(cfg))
    y, ids, reference = _measurements(cfg, mask)
    solver = _SOLVERS[method]
    scfg = solver_config(cfg)
    traces = out / "traces"
    if solver is not None:
        traces.mkdir(parents=True, exist_ok=True)

    def solve(i):
        t0 = time.perf_counter()
        if solver is None:
            img = baselines.zero_filled(y[i], mask)
        else:
            res = solver(y[i], mask, scfg)
            res.write_trace(traces / f"{i:05d}.csv")
            img = res.image
        return img, time.perf_counter() - t0

    with ThreadPoolExecutor(max_workers=max(1, cfg["threads"])) as pool:
        results = list(pool.map(solve, range(len(y))))
    images = [r[0] for r in results]
    times = [r[1] for r in results]
    metrics = _emit_recons(out, method, images, ids, times, reference, cfg["crop"], reference)
    _print_summary(method, metrics)
    return EXIT_OK


def _print_summary(method, metrics):
    m = metrics["mean"]
    if "snr_db" in m:
        print(f"{method}: {metrics['count']} images  SNR {m['snr_db']:.2f} dB  SSIM {m['ssim']:.4f}  "
              f"NRMSE {m['nrmse']:.4f}  time {m['recon_time_seconds'] * 1e3:.2f} ms")
    else:
        print(f"{method}: {metrics['count']} images  time {m['recon_time_seconds'] * 1e3:.2f} ms")


TABLE_COLUMNS = ("method", "count", "snr_db", "ssim", "nrmse", "recon_time_ms")


def evaluation_table(reference: Dataset, recon_dirs, crop: int) -> list[dict]:
    rows = []
    for d in recon_dirs:
        d = Path(d)
        rec_dir = d / "recon" if (d / "recon").is_dir() else d
        recon = _load_dataset(str(rec_dir))
        if recon.ids != reference.ids or recon.shape != reference.shape:
            raise ConfigError(f"{d}: images do not match the reference dataset")
        method, t = d.name, 0.0
        meta = d / "metrics.json"
        if meta.is_file():
            info = json.loads(meta.read_text())
            method = info.get("method", method)
            t = float(info.get("mean", {}).get("recon_time_seconds", 0.0))
        reports = [evaluate(a, b, crop) for a, b in zip(reference.images, recon.images)]
        rows.append({
            "method": method,
            "count": len(reports),
            "snr_db": float(np.mean([r.snr_db for r in reports])),
            "ssim": float(np.mean([r.ssim for r in reports])),
            "nrmse": float(np.mean([r.nrmse for r in reports])),
            "recon_time_ms": t * 1e3,
        })
    return rows


def format_table(rows: list[dict]) -> str:
    cells = [list(TABLE_COLUMNS)]
    for r in rows:
        cells.append([r["method"], str(r["count"]), f"{r['snr_db']:.2f}", f"{r['ssim']:.4f}",
                      f"{r['nrmse']:.4f}", f"{r['recon_time_ms']:.2f}"])
    widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
    lines = []
    for row in cells:
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg: dict, out: Path) -> int:
    reference = _load_dataset(_need(cfg, "dataset"))
    dirs = [s.strip() for s in _need(cfg, "recon_dirs").split(",") if s.strip()]
    rows = evaluation_table(reference, dirs, cfg["crop"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    text = format_table(rows)
    (out / "table.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(cfg: dict, out: Path) -> int:
    results = checks.run_all(cfg["gradcheck_seed"])
    lines = [r.line() for r in results]
    ok = all(r.passed for r in results)
    lines.append(f"{'ALL PASS' if ok else 'FAILURES'}: {sum(r.passed for r in results)}/{len(results)} checks "
                 f"below {checks.THRESHOLD:g}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_datasize_study(cfg: dict, out: Path) -> int:
    ds = _load_dataset(_need(cfg, "dataset"))
    try:
        fractions = [float(s) for s in str(cfg["fractions"]).split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"fractions must be a comma-separated list of numbers, got {cfg['fractions']!r}") from None
    if not fractions or any(not 0 < f <= 1 for f in fractions):
        raise ConfigError("fractions must lie in (0, 1]")
    train_set, test_set = split_by_id(ds, cfg["train_fraction"], cfg["seed"])
    if len(test_set) == 0:
        raise ConfigError("train_fraction leaves no test images")
    mask = _mask_for(cfg, ds.shape)
    y_test = kspace.forward(test_set.images, mask)
    zf = kspace.adjoint(y_test, mask)
    zf_nrmse = float(np.mean([evaluate(a, b, cfg["crop"]).nrmse for a, b in zip(test_set.images, zf)]))
    order = np.random.default_rng(cfg["seed"]).permutation(len(train_set))
    tc, gc, dc = train_config(cfg), generator_config(cfg), discriminator_config(cfg)
    rows = []
    for f in fractions:
        n = max(tc.batch_size, int(round(f * len(train_set))))
        if n > len(train_set):
            raise ConfigError(f"fraction {f} needs {n} images but the training split has {len(train_set)}")
        subset = train_set.subset(np.sort(order[:n]))
        res = train(subset, mask, gc, dc, tc)
        ck = res.checkpoint
        rec = reconstruct(ck.g_params, y_test, mask, ck.g_config, ck.normalization)
        reports = [evaluate(a, b, cfg["crop"]) for a, b in zip(test_set.images, rec)]
        row = {
            "fraction": f,
            "train_images": n,
            "nrmse": float(np.mean([r.nrmse for r in reports])),
            "snr_db": float(np.mean([r.snr_db for r in reports])),
            "zf_nrmse": zf_nrmse,
        }
        rows.append(row)
        _log(f"fraction {f:g}: {n} images, test NRMSE {row['nrmse']:.4f} (ZF {zf_nrmse:.4f})")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "datasize.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    print(f"datasize study over {len(rows)} fractions -> {out / 'datasize.csv'}")
    return EXIT_OK


HANDLERS = {
    "mask-gen": cmd_mask_gen,
    "phantom-gen": cmd_phantom_gen,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
    "datasize-study": cmd_datasize_study,
}


# --- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="flat 'key = value' config file")
    g.add_argument("--seed", type=int, help="random seed (u64)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--threads", type=int, help="worker threads for dataset-level loops")
    keys = common.add_argument_group("config overrides (any config key)")
    for key in DEFAULTS:
        if key in ("seed", "out", "threads"):
            continue
        keys.add_argument("--" + key.replace("_", "-"), dest=key, metavar="V")

    parser = argparse.ArgumentParser(prog="gancs", description="Compressed-sensing MRI with GAN-trained projections.")
    parser.add_argument("--version", action="version", version=f"gancs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("mask-gen", parents=[common], help="generate a variable-density sampling mask")
    sub.add_parser("phantom-gen", parents=[common], help="generate a synthetic phantom dataset")
    sub.add_parser("train", parents=[common], help="train generator and discriminator")
    sub.add_parser("reconstruct", parents=[common], help="reconstruct with a trained generator")
    p = sub.add_parser("baseline", parents=[common], help="zero-filled, wavelet or TV reconstruction")
    p.add_argument("baseline_method", nargs="?", choices=sorted(_SOLVERS))
    p = sub.add_parser("evaluate", parents=[common], help="compare reconstruction directories against a reference")
    p.add_argument("recon", nargs="*", help="reconstruction directories")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all gradients")
    sub.add_parser("datasize-study", parents=[common], help="test NRMSE versus training-set size")
    return parser


def resolve_args(args: argparse.Namespace) -> dict:
    file_values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
        file_values = parse_config_text(text, args.config)
    flags = {}
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            flags[key] = _coerce(key, v) if isinstance(v, str) else v
    if getattr(args, "baseline_method", None):
        flags["method"] = args.baseline_method
    if getattr(args, "recon", None):
        flags["recon_dirs"] = ",".join(args.recon)
    cfg = resolve_config(file_values, flags)
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_args(args)
        out = Path(cfg["out"])
        write_resolved(cfg, args.command, out)
        return HANDLERS[args.command](cfg, out)
    except (NumericalError, baselines.DivergenceError, FloatingPointError) as exc:
        print(f"gancs: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"gancs: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"gancs: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
