"""Time the compiled and numpy kernel backends on the same inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from rdslab import _pykernels, kernels
from rdslab.dynamics import generator, sample_words, shear_pair


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        from rdslab import _ckernels
    except ImportError:
        print("compiled backend not built; only numpy timings are shown")
        _ckernels = None
    system = shear_pair(0.1)
    table = kernels.pack(system.diffeos)
    rng = generator(0)
    words = sample_words(system.measure, 20, 512, rng)
    points = rng.uniform(size=(64, 2))
    cloud = rng.uniform(size=(200_000, 2))
    weights = np.full(len(cloud), 1.0 / len(cloud))
    centres = rng.uniform(size=(20_000, 2))
    cases = {
        "word_products 512 words x 64 points x 20 steps": lambda impl: kernels.word_products(table, words, points, impl=impl),
        "ball_masses 200k points, 20k centres, rho 0.02": lambda impl: kernels.ball_masses(cloud, weights, centres, 0.02, impl=impl),
    }
    print(f"{'case':<52} {'numpy s':>10} {'compiled s':>11} {'speedup':>8}")
    for name, fn in cases.items():
        t_np = _best(lambda: fn(_pykernels), args.repeat)
        if _ckernels is None:
            print(f"{name:<52} {t_np:>10.4f} {'-':>11} {'-':>8}")
            continue
        t_c = _best(lambda: fn(_ckernels), args.repeat)
        print(f"{name:<52} {t_np:>10.4f} {t_c:>11.4f} {t_np / t_c:>8.1f}")


if __name__ == "__main__":
    main()
