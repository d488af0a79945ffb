"""Time the compiled and numpy posterior-accumulation kernels.

Usage: python3 benchmarks/bench_kernels.py [--n N] [--M M] [--d D] [--repeat R]
"""

import argparse
import time

import numpy as np

from emgmm import kernels


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=200_000)
    p.add_argument("--M", type=int, default=5)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    x = rng.normal(size=(args.n, args.d))
    mu = rng.normal(scale=2.0, size=(args.M, args.d))
    logw = np.log(np.full(args.M, 1.0 / args.M))

    impls = {"python": kernels.python_impl}
    if kernels.compiled_impl is not None:
        impls["cython"] = kernels.compiled_impl
    else:
        print("compiled extension not available; timing the numpy kernels only")

    print(f"n={args.n} M={args.M} d={args.d}, best of {args.repeat}")
    results = {}
    for name, impl in impls.items():
        for kernel in ("accumulate", "responsibilities"):
            fn = getattr(impl, kernel)
            secs = best_time(lambda: fn(x, mu, logw), args.repeat)
            results[name, kernel] = fn(x, mu, logw)
            print(f"  {name:7s} {kernel:17s} {secs * 1e3:9.2f} ms  {args.n / secs / 1e6:7.2f} Mrows/s")
    if "cython" in impls:
        m_c, s_c = results["cython", "accumulate"]
        m_p, s_p = results["python", "accumulate"]
        w_c, w_p = results["cython", "responsibilities"], results["python", "responsibilities"]
        diff = max(np.max(np.abs(m_c - m_p)) / args.n, np.max(np.abs(s_c - s_p)) / args.n, np.max(np.abs(w_c - w_p)))
        print(f"  max backend discrepancy (per row): {diff:.2e}")


if __name__ == "__main__":
    main()
