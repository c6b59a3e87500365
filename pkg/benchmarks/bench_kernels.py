"""Time the exhaustive extreme-count kernels on both backends.

    python3 benchmarks/bench_kernels.py --width 10 --k 2 --repeat 3

The numpy kernels are always importable; the numba timings are skipped when
numba is missing or disabled through CUBECOMB_DISABLE_NUMBA.
"""

import argparse
import time
from math import comb

from cubecomb import kernels
from cubecomb._jit import HAVE_NUMBA
from cubecomb.bitspace import CubeDomain
from cubecomb.construct import sample_candidate, sub_seed


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--width", type=int, default=10)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--eps", default="1/2")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    C = sample_candidate(CubeDomain(args.width), args.eps, sub_seed(args.seed, 0))
    n = C.domain.size
    stop = comb(n, args.k)
    print(f"width {args.width}, k {args.k}: {stop} subsets, {n} translates each")

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    results = {}
    for name in backends:
        if name == "numba":
            kernels.set_extremes(C.mask, args.k, 0, min(stop, 16), backend=name)  # compile
        sets_t, sets_out = best_of(lambda: kernels.set_extremes(C.mask, args.k, 0, stop, backend=name), args.repeat)
        if name == "numba":
            kernels.pattern_extremes(C.mask, args.k, 0, min(stop, 16), backend=name)
        pats_t, pats_out = best_of(
            lambda: kernels.pattern_extremes(C.mask, args.k, 0, stop, backend=name), args.repeat
        )
        results[name] = (sets_out, pats_out)
        print(f"{name:6s} sets {sets_t:8.3f} s   patterns {pats_t:8.3f} s")
    if len(results) == 2:
        same = all(
            (a == b).all() if hasattr(a, "all") else a == b
            for x, y in zip(results["numpy"], results["numba"])
            for a, b in zip(x, y)
        )
        print("backends agree:", same)
    if not HAVE_NUMBA:
        print("numba disabled or unavailable")


if __name__ == "__main__":
    main()
