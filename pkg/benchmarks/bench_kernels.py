"""Time the numba kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--size 64] [--channels 16] [--repeat 5]

Both paths are called explicitly (``use_numba=True/False``), so the
``EQDENOISE_DISABLE_NUMBA`` flag does not matter here.  The first numba call
of each kernel is a warm-up and excluded (JIT compilation / cache load).
"""

import argparse
import time

import numpy as np

from eqdenoise import _jit, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, channels, rng):
    x = rng.standard_normal((4, channels, size, size))
    w = rng.standard_normal((channels, channels, 3, 3))
    y = kernels.conv2d_forward(x, w, 1, 1, use_numba=False)
    gy = rng.standard_normal(y.shape)
    img = rng.standard_normal((channels, size, size))
    rows, cols = np.meshgrid(np.linspace(-1, size, size), np.linspace(-1, size, size), indexing="ij")
    _, arg = kernels.maxpool2_forward(x, use_numba=False)
    gp = rng.standard_normal(arg.shape)
    return {
        "conv2d forward 3x3": lambda nb: kernels.conv2d_forward(x, w, 1, 1, use_numba=nb),
        "conv2d grad input": lambda nb: kernels.conv2d_grad_input(gy, w, (size, size), 1, 1, use_numba=nb),
        "conv2d grad weight": lambda nb: kernels.conv2d_grad_weight(x, gy, (3, 3), 1, 1, use_numba=nb),
        "conv2d forward stride 2": lambda nb: kernels.conv2d_forward(x, w, 2, 1, use_numba=nb),
        "maxpool 2x2 forward": lambda nb: kernels.maxpool2_forward(x, use_numba=nb)[0],
        "maxpool 2x2 backward": lambda nb: kernels.maxpool2_backward(gp, arg, use_numba=nb),
        "bilinear sample": lambda nb: kernels.bilinear_sample(img, rows, cols, use_numba=nb),
    }


def run(size=64, channels=16, repeat=5, seed=0):
    """Return rows ``(name, numba_s, numpy_s, max_abs_diff)``."""
    if not _jit.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    for name, fn in cases(size, channels, np.random.default_rng(seed)).items():
        a = fn(True)  # warm-up
        b = fn(False)
        diff = float(np.max(np.abs(a - b)))
        rows.append((name, best_of(lambda: fn(True), repeat), best_of(lambda: fn(False), repeat), diff))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=64)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rows = run(args.size, args.channels, args.repeat)
    print(f"batch 4, {args.channels} channels, {args.size}x{args.size}; best of {args.repeat}")
    print(f"{'kernel':<26}{'numba ms':>10}{'numpy ms':>10}{'speed-up':>10}{'max |diff|':>12}")
    for name, t_nb, t_np, diff in rows:
        print(f"{name:<26}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>9.1f}x{diff:>12.1e}")
    return rows


if __name__ == "__main__":
    main()
