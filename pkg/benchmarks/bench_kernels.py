"""Benchmark the numba-compiled kernels against the numpy fallbacks.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The first numba call of each kernel compiles it (cached on disk), so
every timed section is preceded by an untimed warmup call.
"""

import time

import numpy as np

from sctlab._accel import HAVE_NUMBA
from sctlab import _kernels as K


def timeit(fn, *args, repeat=5):
    fn(*args)  # warmup / jit
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def row(name, numpy_fn, numba_fn, args):
    t_np = timeit(numpy_fn, *args)
    if numba_fn is None:
        print(f"{name:34s} numpy {t_np*1e3:9.3f} ms   numba      n/a")
        return
    t_nb = timeit(numba_fn, *args)
    a = numpy_fn(*args)
    b = numba_fn(*args)
    diff = np.max(np.abs(np.atleast_1d(a) - np.atleast_1d(b)))
    print(
        f"{name:34s} numpy {t_np*1e3:9.3f} ms   numba {t_nb*1e3:9.3f} ms   "
        f"speedup {t_np/t_nb:6.1f}x   max|diff| {diff:.1e}"
    )


def main():
    rng = np.random.default_rng(0)
    if not HAVE_NUMBA:
        print("numba not installed: fallback timings only")
    print(f"{'kernel':34s} {'':>24s}")

    # trig interpolant evaluation: 256 modes at 100k points
    vals = rng.standard_normal(512)
    c = np.fft.rfft(vals) / 512
    cr, ci = np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag)
    xs = rng.random(100_000)
    row("trig_eval (m=256, 1e5 pts)", K.trig_eval_numpy, K.trig_eval_numba, (cr, ci, xs))

    # projective gauge pair scan on a 512-point grid
    den = 1.0 + 0.5 * rng.random(512)
    num = 1.0 + 0.5 * rng.random(512)
    row(
        "hilbert_alpha_scan (n=512)",
        K.hilbert_alpha_scan_numpy,
        K.hilbert_alpha_scan_numba,
        (den, num, 4.0, 1),
    )

    # all-to-all particle field, tensor kernel, M = 5000
    x = rng.random(5000)
    coef = np.array([1.0, -0.3])
    kx = np.array([2.0, 1.0])
    fx = np.array([1, 0], dtype=np.int64)
    ky = np.array([0.0, 1.0])
    fy = np.array([0, 1], dtype=np.int64)
    row(
        "pair_field_tensor (M=5e3)",
        K.pair_field_tensor_numpy,
        K.pair_field_tensor_numba,
        (x, coef, kx, fx, ky, fy),
    )

    # all-to-all particle field, difference kernel, M = 5000
    k = np.array([1.0, 2.0])
    ga = np.array([0.3, 0.1])
    gb = np.array([1.0, -0.2])
    row(
        "pair_field_difference (M=5e3)",
        K.pair_field_difference_numpy,
        K.pair_field_difference_numba,
        (x, k, ga, gb),
    )


if __name__ == "__main__":
    main()
