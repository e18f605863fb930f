"""Times the compiled kernels against the NumPy fallback.

Run: python benchmarks/bench_kernels.py [--size 720p|desk]
"""

import argparse
import time

import numpy as np

from graspteach import kernels
from graspteach.kernels import numpy_backend
from graspteach.morphology import gaussian_kernel

SIZES = {"desk": (128, 128), "720p": (720, 1280)}


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", choices=sorted(SIZES), default="desk")
    args = parser.parse_args()
    h, w = SIZES[args.size]

    if kernels.BACKEND != "cython":
        print("warning: compiled backend not built; comparing numpy against itself")

    rng = np.random.default_rng(0)
    img = rng.random((h, w))
    rgb = rng.random((h, w, 3))
    mask = (rng.random((h, w)) < 0.2).astype(np.uint8)
    kern = gaussian_kernel(5, 1.1)
    seeds = np.array([[h // 2, w // 2], [h // 4, w // 4]], dtype=np.int64)

    cases = [
        ("convolve2d 5x5", lambda b: b.convolve2d(img, kern)),
        ("min_filter 7", lambda b: b.min_filter(img, 7)),
        ("max_filter 15", lambda b: b.max_filter(img, 15)),
        ("label_components", lambda b: b.label_components(mask, 8)),
        ("geodesic_costs", lambda b: b.geodesic_costs(rgb, seeds, 1.0, 0.005)),
    ]
    print(f"image {h}x{w}; active backend: {kernels.BACKEND}")
    print(f"{'kernel':<18} {'compiled':>10} {'numpy':>10} {'speedup':>8}")
    for name, call in cases:
        if name == "geodesic_costs" and args.size == "720p":
            # the heapq fallback takes minutes at 720p; scale it down
            small = rng.random((180, 320, 3))
            sseeds = np.array([[90, 160]], dtype=np.int64)
            t_fast = timeit(lambda b=kernels: b.geodesic_costs(small, sseeds, 1.0, 0.005))
            t_np = timeit(lambda b=numpy_backend: b.geodesic_costs(small, sseeds, 1.0, 0.005),
                          repeat=1)
            name += " (180x320)"
        else:
            t_fast = timeit(lambda: call(kernels))
            t_np = timeit(lambda: call(numpy_backend), repeat=1)
        print(f"{name:<18} {t_fast * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms {t_np / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
