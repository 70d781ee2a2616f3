"""Compare the compiled and pure-Python sampling kernels.

Usage::

    python benchmarks/bench_samplers.py [--draws 200000] [--repeat 3]

Both kernels consume the same random words, so besides timing each case the
script checks that the two backends return identical draws.
"""

import argparse
import time
from fractions import Fraction

import numpy as np

from safetab.noise import (
    GaussianScale,
    GeometricScale,
    RandomSource,
    available_backends,
    epsilon_from_moe,
    rho_from_moe,
    sample_dgauss_many,
    sample_geometric_many,
)

CASES = [
    ("geometric b=2", sample_geometric_many, GeometricScale(2)),
    ("geometric MOE 6", sample_geometric_many, GeometricScale.from_epsilon(epsilon_from_moe(6))),
    ("geometric MOE 50", sample_geometric_many, GeometricScale.from_epsilon(epsilon_from_moe(50))),
    ("dgauss sigma^2=4", sample_dgauss_many, GaussianScale(4)),
    ("dgauss MOE 11", sample_dgauss_many, GaussianScale.from_rho(rho_from_moe(11))),
    ("dgauss MOE 50", sample_dgauss_many, GaussianScale.from_rho(Fraction(192, 100) / 2500)),
]


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--draws", type=int, default=200_000)
    parser.add_argument("--python-draws", type=int, default=None,
                        help="draws for the pure-Python kernel (default draws/10)")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernel not built; only the pure-Python kernel is available")
    n_py = args.python_draws or max(1, args.draws // 10)

    print(f"{'case':<20} {'python draws/s':>15} {'cython draws/s':>15} {'speedup':>8}  identical")
    for name, sampler, scale in CASES:
        t_py, py = best_time(lambda: sampler(scale, RandomSource(args.seed), n_py, backend="python"), args.repeat)
        rate_py = n_py / t_py
        if "cython" in backends:
            t_c, _ = best_time(lambda: sampler(scale, RandomSource(args.seed), args.draws, backend="cython"),
                               args.repeat)
            rate_c = args.draws / t_c
            same = np.array_equal(py, sampler(scale, RandomSource(args.seed), n_py, backend="cython"))
            print(f"{name:<20} {rate_py:>15,.0f} {rate_c:>15,.0f} {rate_c / rate_py:>7.1f}x  {same}")
        else:
            print(f"{name:<20} {rate_py:>15,.0f} {'-':>15} {'-':>8}  -")


if __name__ == "__main__":
    main()
