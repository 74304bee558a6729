"""Timing comparison of the compiled kernels against the numpy fallback.

Runs each hot kernel (same-padded conv2d and the fused grid step,
forward and backward) at model-relevant shapes under both backends and
prints a table with the speedup.  Usage:

    python3 benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import importlib
import time

import numpy as np

from seq2grid.kernels import numpy_backend

try:
    compiled = importlib.import_module("seq2grid.kernels._core")
except ImportError:
    compiled = None


# (label, batch, channels_in, channels_out, height, width, kh, kw)
CONV_SHAPES = [
    ("stem 1x1", 64, 64, 64, 3, 25, 1, 1),
    ("block 3x3", 64, 32, 32, 3, 25, 3, 3),
    ("textcnn 3x3", 64, 64, 128, 4, 8, 3, 3),
]

# (label, batch, grid_height, grid_width, slot_dim)
GRID_SHAPES = [
    ("toyadd grid", 64, 3, 8, 64),
    ("sequence grid", 64, 3, 25, 64),
    ("babi grid", 64, 4, 8, 64),
]


def _time(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_conv(backend, shape, repeats, rng):
    _, b, cin, cout, h, w, kh, kw = shape
    x = rng.standard_normal((b, cin, h, w))
    wt = rng.standard_normal((cout, cin, kh, kw))
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    gy = rng.standard_normal((b, cout, h, w))
    fwd = _time(lambda: backend.conv2d_forward(x, wt, pt, pl), repeats)
    bwd = _time(
        lambda: backend.conv2d_backward(x, wt, gy, pt, pl, True, True),
        repeats)
    return fwd, bwd


def bench_grid(backend, shape, repeats, rng):
    _, b, h, w, d = shape
    g = rng.standard_normal((b, h, w, d))
    e = rng.standard_normal((b, d))
    a = rng.random((b, 3))
    a /= a.sum(axis=1, keepdims=True)
    gy = rng.standard_normal((b, h, w, d))
    fwd = _time(lambda: backend.grid_step_forward(g, e, a), repeats)
    bwd = _time(lambda: backend.grid_step_backward(g, e, a, gy), repeats)
    return fwd, bwd


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if compiled is None:
        print("compiled backend not built; showing numpy only")
    rng = np.random.default_rng(0)

    rows = []
    for kind, shapes, bench in (("conv2d", CONV_SHAPES, bench_conv),
                                ("grid_step", GRID_SHAPES, bench_grid)):
        for shape in shapes:
            base = bench(numpy_backend, shape, args.repeats, rng)
            fast = bench(compiled, shape, args.repeats, rng) \
                if compiled else base
            for phase, n, c in zip(("fwd", "bwd"), base, fast):
                rows.append((f"{kind} {shape[0]} {phase}", n, c))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'compiled':>10}  speedup")
    for label, n, c in rows:
        print(f"{label:<{width}}  {n * 1e6:>8.1f}us  {c * 1e6:>8.1f}us  "
              f"{n / c:>6.2f}x")


if __name__ == "__main__":
    main()
