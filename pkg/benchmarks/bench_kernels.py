"""Compiled vs numpy kernels: im2col, col2im, batch-norm sums and full conv passes.

    python benchmarks/bench_kernels.py [--repeats N]

Prints median milliseconds per call for each backend and the speedup.
Exits with a note if the extension was not built.
"""

import argparse
import statistics
import time

import numpy as np

from gancs.numerics import _pykernels, conv2d_backward, conv2d_forward, conv_geometry
from gancs.numerics import ops

SHAPES = [  # (batch, channels, size, out channels, stride)
    (8, 2, 32, 16, 1),
    (8, 16, 32, 16, 1),
    (8, 16, 64, 32, 2),
    (1, 64, 128, 64, 1),
]


def median_ms(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def kernel_rows(ext, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for n, c, s, co, stride in SHAPES:
        x = rng.normal(size=(n, c, s, s)).astype(np.float32)
        out_h, out_w, pt, pl = conv_geometry(s, s, 3, 3, stride, "same")
        cols = _pykernels.im2col(x, 3, 3, stride, pt, pl, out_h, out_w)
        args = (3, 3, stride, pt, pl, out_h, out_w)
        y = rng.normal(size=x.shape).astype(np.float32)
        k = rng.normal(size=(co, c, 3, 3)).astype(np.float32)
        g = rng.normal(size=(n, co, out_h, out_w)).astype(np.float32)
        tag = f"{n}x{c}x{s}x{s} s{stride}"
        for name, py, cy in [
            ("im2col", lambda: _pykernels.im2col(x, *args), lambda: ext.im2col(x, *args)),
            ("col2im", lambda: _pykernels.col2im(cols, c, s, s, *args), lambda: ext.col2im(cols, c, s, s, *args)),
            ("channel_sums", lambda: _pykernels.channel_sums(x, y), lambda: ext.channel_sums(x, y)),
            ("conv fwd+bwd",
             lambda: (conv2d_forward(x, k, None, stride, use_ext=False), conv2d_backward(x, k, stride, "same", g, use_ext=False)),
             lambda: (conv2d_forward(x, k, None, stride, use_ext=True), conv2d_backward(x, k, stride, "same", g, use_ext=True))),
        ]:
            t_py, t_cy = median_ms(py, repeats), median_ms(cy, repeats)
            rows.append((name, tag, t_py, t_cy))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()
    if ops._ext is None:
        print("compiled kernels not built (or GANCS_PURE_PYTHON set); nothing to compare")
        return
    print(f"{'kernel':<14}{'shape':<18}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, tag, t_py, t_cy in kernel_rows(ops._ext, args.repeats):
        print(f"{name:<14}{tag:<18}{t_py:>10.3f}{t_cy:>11.3f}{t_py / t_cy:>8.2f}x")


if __name__ == "__main__":
    main()
