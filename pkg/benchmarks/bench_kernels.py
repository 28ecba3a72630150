"""Compare the compiled kernels with the numpy fallback on realistic operators.

    python benchmarks/bench_kernels.py [--cells 4096] [--repeat 3]
"""
import argparse
import time

import numpy as np

from thermoform import _kernels_py, kernels
from thermoform.builtins import builtin_map
from thermoform.transfer import build_collocation, build_ulam


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--cells", type=int, default=4096)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the fallback can be timed")
        return
    from thermoform import _kernels as compiled

    T = builtin_map("example22")
    L = build_ulam(T, 0.5, args.cells).matrix
    C = build_collocation(T, 0.5, 1024).matrix
    X = np.random.default_rng(0).random((64, C.shape[0]))

    cases = {
        f"power_steps  n={args.cells} x{args.steps}":
            lambda impl: kernels.power_steps(L, np.full(L.shape[0], 1.0 / L.shape[0]),
                                             args.steps, np.zeros(L.shape[0]), impl=impl),
        "sup_min      64 rows n=1024 x200":
            lambda impl: kernels.sup_min_iterate(C, X.copy(), 1.0, 200, impl=impl),
    }
    print(f"{'kernel':40s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}")
    for name, fn in cases.items():
        tc = _best(lambda: fn(compiled), args.repeat)
        tp = _best(lambda: fn(_kernels_py), args.repeat)
        print(f"{name:40s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f}")


if __name__ == "__main__":
    main()
