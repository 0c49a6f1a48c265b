#!/usr/bin/env python3
"""Benchmark the compiled kernel extension against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from fractokit.kernels import _ref

try:
    from fractokit.kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    img512 = rng.uniform(0, 255, (512, 512))
    img128a = rng.uniform(0, 255, (128, 128))
    img128b = rng.uniform(0, 255, (128, 128))
    block = rng.normal(0, 50, (32, 32))
    hashes = rng.integers(0, 2**64, 100_000, dtype=np.uint64)
    win = _ref.gaussian_kernel()
    words = ["FOAN-2021-%05d" % rng.integers(0, 99999) for _ in range(500)]

    cases = [
        ("levenshtein (500x500 FOAN pairs)", lambda impl: [impl.levenshtein(a, words[0]) for a in words]),
        ("hamming_distances (100k hashes)", lambda impl: impl.hamming_distances(hashes, 12345)),
        ("bilinear_resize 512->32", lambda impl: impl.bilinear_resize(img512, 32, 32)),
        ("bilinear_resize 512->128", lambda impl: impl.bilinear_resize(img512, 128, 128)),
        ("dct2 32x32 (x100)", lambda impl: [impl.dct2_32(block) for _ in range(100)]),
        ("ssim_map 128x128 (x10)", lambda impl: [impl.ssim_map(img128a, img128b, win, 6.5025, 58.5225) for _ in range(10)]),
    ]

    print(f"{'kernel':38s} {'numpy':>10s} {'compiled':>10s} {'speedup':>8s}")
    for name, fn in cases:
        t_ref = timeit(lambda: fn(_ref), args.repeats)
        if _fast is None:
            print(f"{name:38s} {t_ref * 1000:9.2f}ms {'n/a':>10s}")
            continue
        t_fast = timeit(lambda: fn(_fast), args.repeats)
        print(f"{name:38s} {t_ref * 1000:9.2f}ms {t_fast * 1000:9.2f}ms {t_ref / t_fast:7.1f}x")
    if _fast is None:
        print("\ncompiled extension not available; showing fallback only")


if __name__ == "__main__":
    main()
