#!/usr/bin/env python3
"""Benchmark the compiled assembly kernels against the pure-numpy twins.

Shapes mirror the finest q=2 study level (1600 triangles, 6 local dofs).
Run:  python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from sonodg import _kernels_py

try:
    from sonodg import _kernels
except ImportError:
    _kernels = None


def timeit(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--ne", type=int, default=1600)
    parser.add_argument("--nf", type=int, default=2360)
    parser.add_argument("--nloc", type=int, default=6)
    parser.add_argument("--nq", type=int, default=16)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    ne, nf, nloc, nq = args.ne, args.nf, args.nloc, args.nq
    nqf = 4
    data = {
        "mass_blocks": (rng.standard_normal((ne, nq)),
                        rng.standard_normal((nq, nloc))),
        "stiffness_blocks": (rng.standard_normal((ne, nq)),
                             rng.standard_normal((ne, nq, nloc, 2))),
        "sip_face_blocks": (rng.uniform(0, 1, (nf, nqf)),
                            rng.standard_normal((nf, 2, nqf, nloc)),
                            rng.standard_normal((nf, 2, nqf, nloc)),
                            rng.uniform(1, 4, nf)),
        "upwind_face_blocks": (rng.standard_normal((nf, nqf)),
                               rng.standard_normal((nf, 2, nqf, nloc)),
                               rng.standard_normal((nf, nqf, nloc))),
        "face_mass_blocks": (rng.uniform(0, 1, (nf, nqf)),
                             rng.standard_normal((nf, nqf, nloc))),
    }
    nnz = ne * nloc * nloc * 4
    pos = rng.integers(0, nnz, size=(nf, 2, 2, nloc, nloc))
    vals = rng.standard_normal(pos.shape)
    scatter_target = np.zeros(nnz)
    data["scatter_add"] = (scatter_target, pos, vals)

    print(f"shapes: ne={ne} nf={nf} nloc={nloc} nq={nq} "
          f"(best of {args.repeat})\n")
    print(f"{'kernel':<22}{'numpy (ms)':>12}{'cython (ms)':>13}{'speedup':>9}")
    for name, a in data.items():
        a = tuple(np.ascontiguousarray(x) if isinstance(x, np.ndarray) else x
                  for x in a)
        t_py = timeit(getattr(_kernels_py, name), a, args.repeat)
        if _kernels is None:
            print(f"{name:<22}{1e3 * t_py:>12.3f}{'n/a':>13}{'':>9}")
            continue
        t_cy = timeit(getattr(_kernels, name), a, args.repeat)
        print(f"{name:<22}{1e3 * t_py:>12.3f}{1e3 * t_cy:>13.3f}"
              f"{t_py / t_cy:>8.1f}x")
    if _kernels is None:
        print("\ncompiled backend unavailable; showing the fallback only")


if __name__ == "__main__":
    main()
