"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are checked for bit-identical output before timing.
"""
import argparse
import timeit

import numpy as np

from astromf import _fallback

try:
    from astromf import _kernels
except ImportError:
    _kernels = None


def _inputs(reps=200, days=100, seed=3):
    rng = np.random.default_rng(seed)
    demand = rng.exponential(50.0, size=(reps, days))
    lead = rng.poisson(3.0, size=(reps, days)).astype(np.int64)
    return demand, lead


def cases():
    demand, lead = _inputs()
    reps = np.arange(1, 1001, dtype=np.uint64)
    return {
        "uniform_block 1000x200": (lambda m: m.uniform_block(0x1234ABCD, reps, 7, 200)),
        "ss_costs 200x100": (lambda m: m.ss_costs(demand, lead, 150.0, 400.0, 1.0, 4.0, 36.0, 2.0, 400.0)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<26}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(_fallback), number=1, repeat=args.repeat)) * 1e3
        if _kernels is None:
            print(f"{name:<26}{t_py:>14.3f}{'-':>14}{'-':>10}")
            continue
        if not np.array_equal(fn(_fallback), fn(_kernels)):
            raise SystemExit(f"{name}: backends disagree")
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<26}{t_py:>14.3f}{t_cy:>14.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
