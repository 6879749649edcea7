"""Benchmark the compiled kernels against the pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py  [--repeats N]

The same fallbacks are selected at import time by XDC_NO_NUMBA=1; here
both implementations are imported directly and timed side by side.
"""

import argparse
import time

import numpy as np

from xdc.kernels import (
    NUMBA_ENABLED,
    bilinear_resize_nb,
    bilinear_resize_np,
    box_down_nb,
    box_down_np,
    dilate4_nb,
    dilate4_np,
    gmm_posterior_nb,
    gmm_posterior_np,
)


def bench(fn, args, repeats):
    fn(*args)  # warmup / compile
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    grid = rng.normal(size=(256, 256, 3))
    small = rng.normal(size=(64, 64, 3))
    mask = (rng.uniform(size=(256, 256)) > 0.5).astype(np.float64)
    x = rng.normal(size=256)
    means = rng.normal(size=(4, 256))
    stds = np.array([0.1, 0.2, 0.3, 0.4])
    logw = np.log(np.full(4, 0.25))

    cases = [
        ("box_down 256x256x3 /4", box_down_nb, box_down_np, (grid, 4, 4)),
        ("bilinear 64->256", bilinear_resize_nb, bilinear_resize_np, (small, 256, 256)),
        ("dilate4 256x256", dilate4_nb, dilate4_np, (mask,)),
        ("gmm_posterior K=4 D=256", gmm_posterior_nb, gmm_posterior_np,
         (x, means, stds, logw, 0.5)),
    ]

    print(f"numba path enabled by default: {NUMBA_ENABLED}")
    print(f"{'kernel':28s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name, fn_nb, fn_np, case_args in cases:
        t_nb = bench(fn_nb, case_args, args.repeats)
        t_np = bench(fn_np, case_args, args.repeats)
        print(f"{name:28s} {t_nb * 1e6:9.1f}u {t_np * 1e6:9.1f}u {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
